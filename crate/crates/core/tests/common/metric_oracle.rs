//! Brute-force metric oracles: direct counting, no sorting tricks.

#![allow(dead_code)]

pub fn accuracy(pred: &[usize], labels: &[usize]) -> f64 {
    let mut hits = 0;
    for i in 0..pred.len() {
        if pred[i] == labels[i] {
            hits += 1;
        }
    }
    hits as f64 / pred.len() as f64
}

/// 1-based rank of sample `i` under descending score, ties by ascending index.
fn rank(scores: &[f64], i: usize) -> usize {
    1 + (0..scores.len()).filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i)).count()
}

pub fn average_precision(scores: &[f64], targets: &[bool]) -> Option<f64> {
    let mut positives: Vec<usize> = (0..scores.len()).filter(|&i| targets[i]).collect();
    // Summed in rank order so the floating-point sum is reproducible.
    positives.sort_by_key(|&i| rank(scores, i));
    if positives.is_empty() {
        return None;
    }
    let mut total = 0.0;
    for &i in &positives {
        let r = rank(scores, i);
        let above = positives.iter().filter(|&&j| rank(scores, j) <= r).count();
        total += above as f64 / r as f64;
    }
    Some(total / positives.len() as f64)
}

pub fn mean_average_precision(scores: &[Vec<f64>], targets: &[Vec<bool>]) -> Option<f64> {
    let aps: Vec<f64> = (0..scores[0].len())
        .filter_map(|c| {
            let col: Vec<f64> = scores.iter().map(|r| r[c]).collect();
            let tgt: Vec<bool> = targets.iter().map(|r| r[c]).collect();
            average_precision(&col, &tgt)
        })
        .collect();
    (!aps.is_empty()).then(|| aps.iter().sum::<f64>() / aps.len() as f64)
}

/// Counts at threshold `t`: (non-targets >= t, targets < t).
fn errors_at(trials: &[(f64, bool)], t: f64) -> (i64, i64) {
    let fa = trials.iter().filter(|&&(s, tgt)| !tgt && s >= t).count() as i64;
    let fr = trials.iter().filter(|&&(s, tgt)| tgt && s < t).count() as i64;
    (fa, fr)
}

/// Sweeps every unique score plus +inf. Returns the rate where FAR meets
/// FRR, intersecting the segment between the last threshold with FAR > FRR
/// and the first with FAR < FRR. Computed in integers, divided once.
pub fn equal_error_rate(trials: &[(f64, bool)]) -> f64 {
    let nt = trials.iter().filter(|t| t.1).count() as i64;
    let nn = trials.len() as i64 - nt;
    let mut thresholds: Vec<f64> = trials.iter().map(|t| t.0).collect();
    thresholds.push(f64::INFINITY);
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let mut prev: Option<(i64, i64)> = None;
    for t in thresholds {
        let (fa, fr) = errors_at(trials, t);
        // FAR = fa/nn, FRR = fr/nt; compare over the common denominator.
        let diff = fa * nt - fr * nn;
        if diff == 0 {
            return fa as f64 / nn as f64;
        }
        if diff < 0 {
            let (a, b) = prev.expect("FAR starts at 1");
            let (c, d) = (fa, fr);
            // Intersection of (a/nn, b/nt)-(c/nn, d/nt) with FAR = FRR.
            let num = a * d - b * c;
            let den = (a - c) * nt + (d - b) * nn;
            return num as f64 / den as f64;
        }
        prev = Some((fa, fr));
    }
    unreachable!("FRR is 1 at +inf")
}
