use super::MetricError;

/// Verification trials as `(score, is_target)` pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoredTrials(pub Vec<(f64, bool)>);

impl ScoredTrials {
    pub fn new(trials: Vec<(f64, bool)>) -> Self {
        Self(trials)
    }

    pub fn push(&mut self, score: f64, target: bool) {
        self.0.push((score, target));
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Equal error rate.
///
/// Thresholds are the sorted unique scores plus `+inf`. At threshold `t`,
/// FAR is the share of non-targets scoring `>= t` and FRR the share of
/// targets scoring `< t`. FAR - FRR is strictly decreasing along the sweep;
/// the EER is its zero, taken exactly when hit and otherwise by linear
/// interpolation between the two bracketing (FAR, FRR) points.
pub fn equal_error_rate(trials: &ScoredTrials) -> Result<f64, MetricError> {
    let n_target = trials.0.iter().filter(|t| t.1).count();
    let n_non = trials.0.len() - n_target;
    if n_target == 0 || n_non == 0 {
        return Err(MetricError::TrialComposition(format!(
            "need target and non-target trials, got {n_target} and {n_non}"
        )));
    }
    if trials.0.iter().any(|t| t.0.is_nan()) {
        return Err(MetricError::Input("NaN score".into()));
    }
    let mut sorted = trials.0.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Walking thresholds upward: everything strictly below the current
    // threshold has been passed over. Rates share the denominators n_non
    // and n_target, so the crossing is computed from counts and divided once.
    let (nt, nn) = (n_target as i64, n_non as i64);
    let mut below_target = 0i64;
    let mut below_non = 0i64;
    let mut prev: Option<(i64, i64)> = None;
    let mut i = 0;
    loop {
        let (fa, fr) = (nn - below_non, below_target);
        let diff = fa * nt - fr * nn;
        if diff == 0 {
            return Ok(fa as f64 / nn as f64);
        }
        if diff < 0 {
            let (a, b) = prev.expect("FAR exceeds FRR at the lowest threshold");
            let num = a * fr - b * fa;
            let den = (a - fa) * nt + (fr - b) * nn;
            return Ok(num as f64 / den as f64);
        }
        prev = Some((fa, fr));
        if i == sorted.len() {
            unreachable!("FRR reaches 1 at the +inf threshold");
        }
        let t = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == t {
            if sorted[i].1 {
                below_target += 1;
            } else {
                below_non += 1;
            }
            i += 1;
        }
    }
}
