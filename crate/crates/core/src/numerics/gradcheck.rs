use super::{Tape, Tensor, TensorError, Var};
use crate::par::{self, Execution};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntryStatus {
    Checked,
    /// The tensor does not require a gradient; nothing was compared.
    NotTrainable,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamDeviation {
    pub index: usize,
    pub status: EntryStatus,
    /// max over entries of |analytic - numeric| / max(|numeric|, 1e-8)
    pub max_rel_deviation: f64,
    /// Flat position of the worst entry.
    pub worst_entry: usize,
    pub exceeds_tolerance: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub params: Vec<ParamDeviation>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| !p.exceeds_tolerance)
    }

    pub fn max_deviation(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_deviation).fold(0.0, f64::max)
    }
}

fn evaluate<F, E>(builder: &F, params: &[Tensor<f64>]) -> Result<f64, E>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var, E>,
    E: From<TensorError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let loss = builder(&mut tape, &vars)?;
    let value = tape.value(loss)?;
    if value.numel() != 1 {
        return Err(TensorError::Contract("builder must return a scalar".into()).into());
    }
    Ok(value.data()[0])
}

/// Compares reverse-mode gradients of `builder` against central differences.
///
/// Tensors whose `requires_grad` flag is false are reported as
/// [`EntryStatus::NotTrainable`] with deviation 0.
pub fn finite_difference_check<F, E>(
    builder: F,
    params: &[Tensor<f64>],
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport, E>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var, E> + Sync + Send,
    E: From<TensorError> + Send,
{
    if step <= 0.0 {
        return Err(TensorError::Contract("finite-difference step must be positive".into()).into());
    }
    let base = evaluate(&builder, params)?;
    let again = evaluate(&builder, params)?;
    if base.to_bits() != again.to_bits() {
        return Err(TensorError::Determinism(format!("repeated evaluation gave {base} then {again}")).into());
    }

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let loss = builder(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Option<Vec<f64>>> = vars.iter().map(|&v| tape.grad(v).map(<[f64]>::to_vec)).collect();

    let mut report = Vec::with_capacity(params.len());
    for (pi, p) in params.iter().enumerate() {
        if !p.requires_grad() {
            report.push(ParamDeviation {
                index: pi,
                status: EntryStatus::NotTrainable,
                max_rel_deviation: 0.0,
                worst_entry: 0,
                exceeds_tolerance: false,
            });
            continue;
        }
        let zeros = vec![0.0; p.numel()];
        let grad = analytic[pi].as_deref().unwrap_or(&zeros);
        let deviations = par::try_map_indexed(p.numel(), Execution::default(), |e| -> Result<f64, E> {
            let mut shifted = params.to_vec();
            let orig = p.data()[e];
            shifted[pi].data_mut()[e] = orig + step;
            let plus = evaluate(&builder, &shifted)?;
            shifted[pi].data_mut()[e] = orig - step;
            let minus = evaluate(&builder, &shifted)?;
            let numeric = (plus - minus) / (2.0 * step);
            Ok((grad[e] - numeric).abs() / numeric.abs().max(1e-8))
        })?;
        let (worst_entry, max_rel_deviation) = deviations
            .iter()
            .copied()
            .enumerate()
            .fold((0, 0.0), |acc, (i, d)| if d > acc.1 { (i, d) } else { acc });
        report.push(ParamDeviation {
            index: pi,
            status: EntryStatus::Checked,
            max_rel_deviation,
            worst_entry,
            exceeds_tolerance: max_rel_deviation > tolerance,
        });
    }
    Ok(GradCheckReport { tolerance, params: report })
}
