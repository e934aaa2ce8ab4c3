use super::MetricError;

#[derive(Clone, Debug, PartialEq)]
pub struct MapResult {
    pub value: f64,
    /// Classes without any positive target; excluded from the average.
    pub skipped_classes: Vec<usize>,
}

/// Non-interpolated average precision for one class: the mean of
/// precision@rank over the ranks of the positives, with samples sorted by
/// descending score and ties broken by ascending sample index.
/// Returns `None` when there is no positive.
pub fn average_precision(scores: &[f64], targets: &[bool]) -> Option<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if targets[i] {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    (hits > 0).then(|| total / hits as f64)
}

/// Macro-averaged AP over the columns of a `B × C` score matrix.
pub fn mean_average_precision(scores: &[Vec<f64>], targets: &[Vec<bool>]) -> Result<MapResult, MetricError> {
    if scores.is_empty() || scores.len() != targets.len() {
        return Err(MetricError::Input(format!("{} score rows for {} target rows", scores.len(), targets.len())));
    }
    let classes = scores[0].len();
    if scores.iter().any(|r| r.len() != classes) || targets.iter().any(|r| r.len() != classes)
    {
        return Err(MetricError::Input("ragged score or target matrix".into()));
    }
    let mut skipped = Vec::new();
    let mut aps = Vec::new();
    for c in 0..classes {
        let col: Vec<f64> = scores.iter().map(|r| r[c]).collect();
        let tgt: Vec<bool> = targets.iter().map(|r| r[c]).collect();
        match average_precision(&col, &tgt) {
            Some(ap) => aps.push(ap),
            None => skipped.push(c),
        }
    }
    if aps.is_empty() {
        return Err(MetricError::Undefined("no class has a positive target".into()));
    }
    Ok(MapResult { value: aps.iter().sum::<f64>() / aps.len() as f64, skipped_classes: skipped })
}
