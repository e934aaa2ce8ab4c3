use ipet_core::numerics::{finite_difference_check, OpKind, SeededRng, Tape, Tensor, TensorError, Var};
use proptest::prelude::*;

fn trainable(rng: &mut SeededRng, rows: usize, cols: usize) -> Tensor<f64> {
    let data = (0..rows * cols)
        .map(|_| {
            let v = rng.normal();
            // Keep ReLU inputs off the kink.
            if v.abs() < 0.05 { 0.5f64.copysign(v) } else { v }
        })
        .collect();
    Tensor::matrix(rows, cols, data).unwrap().with_grad(true)
}

/// Reduces `out` to a scalar through fixed random weights so no gradient
/// entry is trivially shared.
fn weighted_sum(tape: &mut Tape<f64>, out: Var, seed: u64) -> Result<Var, TensorError> {
    let (r, c) = tape.shape(out);
    let mut rng = SeededRng::new(seed, 99);
    let w = tape.constant(r, c, (0..r * c).map(|_| rng.normal()).collect())?;
    let wt = tape.transpose(w)?;
    let prod = tape.matmul(out, wt)?;
    // trace(out · wᵀ) = Σ out ⊙ w, read off the diagonal.
    let diag = tape.gather(prod, (0..r).map(|i| Some(i * r + i)).collect(), 1, r)?;
    tape.sum(diag)
}

fn check(kind: OpKind, shapes: &[(usize, usize)], seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed, 0);
    let params: Vec<Tensor<f64>> = shapes.iter().map(|&(r, c)| trainable(&mut rng, r, c)).collect();
    let report = finite_difference_check(
        |tape: &mut Tape<f64>, v: &[Var]| -> Result<Var, TensorError> {
            let out = tape.forward_op(kind.clone(), v)?;
            weighted_sum(tape, out, seed)
        },
        &params,
        1e-5,
        1e-3,
    )
    .unwrap();
    assert!(report.passed(), "{} deviation {}", kind.name(), report.max_deviation());
    report.max_deviation()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_op_matches_central_differences(m in 1usize..4, k in 1usize..4, n in 2usize..5, seed in any::<u64>()) {
        check(OpKind::MatMul, &[(m, k), (k, n)], seed);
        check(OpKind::Add, &[(m, n), (m, n)], seed);
        check(OpKind::Add, &[(m, n), (1, n)], seed);
        check(OpKind::ConcatRows, &[(m, n), (k, n)], seed);
        check(OpKind::SliceRows { start: 1, len: m }, &[(m + 2, n)], seed);
        check(OpKind::Relu, &[(m, n)], seed);
        check(OpKind::Gelu, &[(m, n)], seed);
        check(OpKind::SoftmaxRows, &[(m, n)], seed);
        check(OpKind::LayerNorm, &[(m, n)], seed);
        check(OpKind::LayerNorm, &[(m, n), (1, n), (1, n)], seed);
        check(OpKind::Scale(-0.7), &[(m, n)], seed);
        check(OpKind::MeanRows, &[(m, n)], seed);
        check(OpKind::StddevRows, &[(m + 1, n)], seed);
        check(OpKind::Transpose, &[(m, n)], seed);
    }

    #[test]
    fn losses_match_central_differences(b in 1usize..4, c in 2usize..5, seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed, 1);
        let labels: Vec<usize> = (0..b).map(|_| rng.below(c)).collect();
        let targets: Vec<f64> = (0..b * c).map(|_| rng.below(2) as f64).collect();
        let logits = vec![trainable(&mut rng, b, c)];
        let ce = finite_difference_check(
            |tape: &mut Tape<f64>, v: &[Var]| -> Result<Var, TensorError> { tape.cross_entropy(v[0], &labels) },
            &logits, 1e-5, 1e-3,
        ).unwrap();
        prop_assert!(ce.passed(), "ce {}", ce.max_deviation());
        let bce = finite_difference_check(
            |tape: &mut Tape<f64>, v: &[Var]| -> Result<Var, TensorError> { tape.bce_with_logits(v[0], &targets) },
            &logits, 1e-5, 1e-3,
        ).unwrap();
        prop_assert!(bce.passed(), "bce {}", bce.max_deviation());
    }

    #[test]
    fn gather_and_scatter_match_central_differences(n in 2usize..6, seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed, 2);
        let index: Vec<Option<usize>> = (0..n * 2).map(|_| if rng.below(4) == 0 { None } else { Some(rng.below(n)) }).collect();
        let spots: Vec<usize> = (0..n).map(|_| rng.below(n * 2)).collect();
        let params = vec![trainable(&mut rng, 1, n), trainable(&mut rng, 2, n), trainable(&mut rng, 1, n)];
        let report = finite_difference_check(
            |tape: &mut Tape<f64>, v: &[Var]| -> Result<Var, TensorError> {
                let g = tape.gather(v[0], index.clone(), 2, n)?;
                let s = tape.scatter_add(v[1], v[2], spots.clone())?;
                let both = tape.add(g, s)?;
                weighted_sum(tape, both, seed)
            },
            &params, 1e-5, 1e-3,
        ).unwrap();
        prop_assert!(report.passed(), "{}", report.max_deviation());
    }

    #[test]
    fn concat_then_slice_is_identity(rows in prop::collection::vec(1usize..4, 1..4), cols in 1usize..5, seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed, 3);
        let mut tape = Tape::<f64>::new();
        let parts: Vec<Var> = rows
            .iter()
            .map(|&r| tape.constant(r, cols, (0..r * cols).map(|_| rng.normal()).collect()).unwrap())
            .collect();
        let whole = tape.concat_rows(&parts).unwrap();
        prop_assert_eq!(tape.shape(whole), (rows.iter().sum::<usize>(), cols));
        let mut start = 0;
        for (&r, &p) in rows.iter().zip(&parts) {
            let s = tape.slice_rows(whole, start, r).unwrap();
            prop_assert_eq!(tape.data(s).to_vec(), tape.data(p).to_vec());
            start += r;
        }
    }

    #[test]
    fn softmax_rows_are_distributions(rows in 1usize..4, cols in 1usize..6, seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed, 4);
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(rows, cols, (0..rows * cols).map(|_| 30.0 * rng.normal()).collect()).unwrap();
        let s = tape.softmax_rows(x).unwrap();
        for row in tape.data(s).chunks(cols) {
            prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn vars_from_another_tape_are_rejected() {
    let mut a = Tape::<f64>::new();
    let mut b = Tape::<f64>::new();
    let x = a.constant(1, 2, vec![1.0, 2.0]).unwrap();
    let y = b.constant(1, 2, vec![1.0, 2.0]).unwrap();
    assert!(matches!(b.add(x, y), Err(TensorError::Tape(_))));
    assert!(b.value(x).is_err());
    assert!(b.grad(x).is_none());
}

#[test]
fn shape_errors_and_contracts() {
    let mut tape = Tape::<f64>::new();
    let a = tape.constant(2, 3, vec![0.0; 6]).unwrap();
    let b = tape.constant(2, 3, vec![0.0; 6]).unwrap();
    assert!(matches!(tape.matmul(a, b), Err(TensorError::Dimension { op: "matmul", .. })));
    assert!(matches!(tape.slice_rows(a, 1, 2), Err(TensorError::Dimension { .. })));
    assert!(matches!(tape.forward_op(OpKind::Relu, &[a, b]), Err(TensorError::Contract(_))));
    assert!(matches!(tape.backward(a), Err(TensorError::Contract(_))));
    assert!(Tensor::<f64>::matrix(2, 2, vec![0.0; 3]).is_err());
    let bad = finite_difference_check(
        |_tape: &mut Tape<f64>, v: &[Var]| -> Result<Var, TensorError> { Ok(v[0]) },
        &[Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap().with_grad(true)],
        1e-5,
        1e-3,
    );
    assert!(matches!(bad, Err(TensorError::Contract(_))));
}

#[test]
fn nondeterministic_builders_are_reported() {
    use std::sync::atomic::{AtomicU64, Ordering};
    let calls = AtomicU64::new(0);
    let res = finite_difference_check(
        |tape: &mut Tape<f64>, v: &[Var]| -> Result<Var, TensorError> {
            let n = calls.fetch_add(1, Ordering::SeqCst) as f64;
            let s = tape.scale(v[0], 1.0 + n)?;
            tape.sum(s)
        },
        &[Tensor::scalar(1.0).with_grad(true)],
        1e-5,
        1e-3,
    );
    assert!(matches!(res, Err(TensorError::Determinism(_))));
}

#[test]
fn seeded_streams_are_independent_and_reproducible() {
    let draw = |seed, stream| {
        let mut r = SeededRng::new(seed, stream);
        (0..8).map(|_| r.uniform(0.0, 1.0)).collect::<Vec<_>>()
    };
    assert_eq!(draw(5, 1), draw(5, 1));
    assert_ne!(draw(5, 1), draw(5, 2));
    assert_ne!(draw(5, 1), draw(6, 1));
    let mut r = SeededRng::new(0, 0);
    assert!(r.uniform_vec(1000, 0.25).iter().all(|v| v.abs() <= 0.25));
}
