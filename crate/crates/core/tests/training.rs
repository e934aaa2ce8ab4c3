use ipet_core::backbone::{BackboneConfig, Input, Model};
use ipet_core::data::{generate_task, Dataset, InputSpec, TaskFamily, TaskSpec};
use ipet_core::numerics::{SeededRng, Tape, Tensor};
use ipet_core::par::Execution;
use ipet_core::training::{
    adam_step, cosine_score, cross_entropy, multi_hot, multilabel_bce, speaker_embedding, train, OptimizerState, TrainConfig,
};
use ipet_core::tuning::{assert_frozen, attach, FrozenSnapshot, Method, TuningSpec};
use ipet_core::Error;

fn toy() -> Dataset {
    generate_task(&TaskSpec {
        family: TaskFamily::KsLike,
        num_classes: 2,
        samples_per_class: 16,
        test_per_class: 4,
        input: InputSpec::Spectrogram { freq: 8, time: 8 },
        noise: 0.1,
        seed: 0,
    })
    .unwrap()
}

fn toy_model(method: Method) -> Model<f32> {
    let mut cfg = BackboneConfig::desk_ast();
    cfg.depth = 1;
    attach(Model::new(cfg, 2).unwrap(), &TuningSpec::new(method)).unwrap()
}

fn lp_f64() -> Model<f64> {
    let mut cfg = BackboneConfig::desk_ast();
    cfg.depth = 0;
    attach(Model::new(cfg, 2).unwrap(), &TuningSpec::new(Method::Lp)).unwrap()
}

fn random_grads(model: &Model<f64>, rng: &mut SeededRng) -> Vec<Option<Vec<f64>>> {
    model.params().iter().map(|p| p.trainable().then(|| (0..p.tensor.numel()).map(|_| rng.normal()).collect())).collect()
}

#[test]
fn adam_matches_reference_recurrence() {
    let mut model = lp_f64();
    let (lr, b1, b2, eps) = (0.01, 0.9, 0.999, 1e-8);
    let mut state = OptimizerState::new(&model, lr, b1, b2, eps);
    let trainable: Vec<usize> = (0..model.params().len()).filter(|&i| model.params()[i].trainable()).collect();
    // Track three scalars by hand.
    let picks = [(trainable[0], 0), (trainable[0], 5), (trainable[1], 1)];
    let mut w: Vec<f64> = picks.iter().map(|&(p, e)| model.params()[p].tensor.data()[e]).collect();
    let (mut m, mut v) = ([0.0f64; 3], [0.0f64; 3]);
    let mut rng = SeededRng::new(1, 0);
    for t in 1..=10 {
        let grads = random_grads(&model, &mut rng);
        adam_step(&mut state, &mut model, &grads).unwrap();
        for (j, &(p, e)) in picks.iter().enumerate() {
            let g = grads[p].as_ref().unwrap()[e];
            m[j] = b1 * m[j] + (1.0 - b1) * g;
            v[j] = b2 * v[j] + (1.0 - b2) * g * g;
            let mh = m[j] / (1.0 - b1.powi(t));
            let vh = v[j] / (1.0 - b2.powi(t));
            w[j] -= lr * mh / (vh.sqrt() + eps);
            assert_eq!(model.params()[p].tensor.data()[e].to_bits(), w[j].to_bits(), "step {t} entry {j}");
        }
    }
    assert_eq!(state.step(), 10);
}

#[test]
fn doubling_lr_doubles_first_delta() {
    let deltas = |lr: f64| {
        let mut model = lp_f64();
        for p in model.params_mut().iter_mut().filter(|p| p.trainable()) {
            p.tensor.data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
        let mut state = OptimizerState::with_defaults(&model, lr);
        let grads = random_grads(&model, &mut SeededRng::new(2, 0));
        adam_step(&mut state, &mut model, &grads).unwrap();
        model.params().iter().filter(|p| p.trainable()).flat_map(|p| p.tensor.data().to_vec()).collect::<Vec<_>>()
    };
    let (a, b) = (deltas(1e-3), deltas(2e-3));
    for (x, y) in a.iter().zip(&b) {
        assert_eq!((2.0 * x).to_bits(), y.to_bits());
    }
    // The first step moves every entry by about lr.
    assert!(a.iter().all(|x| (x.abs() - 1e-3).abs() < 1e-6));
}

#[test]
fn adam_zero_gradient_and_confinement() {
    let mut model = lp_f64();
    let before = model.clone();
    let mut state = OptimizerState::with_defaults(&model, 0.1);
    let zeros: Vec<Option<Vec<f64>>> = model.params().iter().map(|p| p.trainable().then(|| vec![0.0; p.tensor.numel()])).collect();
    adam_step(&mut state, &mut model, &zeros).unwrap();
    assert_eq!(model, before);
    assert_eq!(state.step(), 1);

    let mut leaked = zeros.clone();
    let frozen = model.params().iter().position(|p| !p.trainable()).unwrap();
    leaked[frozen] = Some(vec![0.0; model.params()[frozen].tensor.numel()]);
    assert!(matches!(adam_step(&mut state, &mut model, &leaked), Err(Error::Confinement(_))));
    let mut missing = zeros;
    let head = model.params().iter().position(|p| p.trainable()).unwrap();
    missing[head] = None;
    assert!(matches!(adam_step(&mut state, &mut model, &missing), Err(Error::Confinement(_))));
}

#[test]
fn losses_match_entrywise_oracles() {
    let mut rng = SeededRng::new(3, 0);
    let z: Vec<f64> = (0..6).map(|_| 3.0 * rng.normal()).collect();
    let labels = [2usize, 0];
    let targets = [1.0, 0.0, 1.0, 0.0, 0.0, 1.0];
    let mut tape = Tape::<f64>::new();
    let logits = tape.constant(2, 3, z.clone()).unwrap();
    let ce = cross_entropy(&mut tape, logits, &labels).unwrap();
    let bce = multilabel_bce(&mut tape, logits, &targets).unwrap();

    let ce_ref = z
        .chunks(3)
        .zip(labels)
        .map(|(row, y)| -(row[y].exp() / row.iter().map(|v| v.exp()).sum::<f64>()).ln())
        .sum::<f64>()
        / 2.0;
    let sigmoid = |x: f64| 1.0 / (1.0 + (-x).exp());
    let bce_ref = z.iter().zip(targets).map(|(&x, t)| -(t * sigmoid(x).ln() + (1.0 - t) * (1.0 - sigmoid(x)).ln())).sum::<f64>() / 6.0;
    assert!((tape.data(ce)[0] - ce_ref).abs() < 1e-6);
    assert!((tape.data(bce)[0] - bce_ref).abs() < 1e-6);

    let zero = tape.constant(2, 3, vec![0.0; 6]).unwrap();
    let l = multilabel_bce(&mut tape, zero, &targets).unwrap();
    assert!((tape.data(l)[0] - std::f64::consts::LN_2).abs() < 1e-15);
    assert!(multilabel_bce(&mut tape, zero, &[0.5; 6]).is_err());
    assert!(cross_entropy(&mut tape, zero, &[3, 0]).is_err());
    assert_eq!(multi_hot::<f64>(&[0, 2], 4).unwrap(), vec![1.0, 0.0, 1.0, 0.0]);
    assert!(multi_hot::<f64>(&[4], 4).is_err());
}

#[test]
fn cosine_matches_direct_formula() {
    let mut rng = SeededRng::new(4, 0);
    for _ in 0..100 {
        let a: Vec<f64> = (0..7).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..7).map(|_| rng.normal()).collect();
        let mut dot = 0.0;
        let (mut na, mut nb) = (0.0, 0.0);
        for i in 0..7 {
            dot += a[i] * b[i];
            na += a[i] * a[i];
            nb += b[i] * b[i];
        }
        let want = dot / (na.sqrt() * nb.sqrt());
        let got = cosine_score(&a, &b).unwrap();
        assert!((got - want).abs() < 1e-7);
        assert_eq!(got.to_bits(), cosine_score(&b, &a).unwrap().to_bits());
    }
    assert_eq!(cosine_score(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
    assert!(matches!(cosine_score(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::Score(_))));
    assert!(matches!(cosine_score(&[1.0], &[1.0, 0.0]), Err(Error::Score(_))));
}

#[test]
fn speaker_embeddings_are_unit_and_deterministic() {
    let data = toy();
    for cfg in [BackboneConfig::desk_ast(), BackboneConfig::desk_w2v2()] {
        let model = Model::<f64>::new(cfg.clone(), 2).unwrap();
        let input: Input<f64> = if cfg.patch_size.is_some() {
            data.samples[0].input.cast()
        } else {
            Input::Waveform(Tensor::new(vec![64], (0..64).map(|i| (i as f64 * 0.3).sin()).collect()).unwrap())
        };
        let e = speaker_embedding(&model, &input).unwrap();
        assert!((e.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() < 1e-6);
        assert_eq!(e, speaker_embedding(&model, &input).unwrap());
        assert!((cosine_score(&e, &e).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn zero_epochs_leave_the_model_untouched() {
    let data = toy();
    let mut model = toy_model(Method::Ipet);
    let before = model.clone();
    let report = train(&mut model, &data, &TrainConfig::new(0)).unwrap();
    assert_eq!(model, before);
    assert_eq!(report.steps, 0);
    assert!(report.epoch_losses.is_empty());
    assert_eq!(report.initial, report.final_metric);
}

#[test]
fn training_keeps_frozen_parameters_bitwise() {
    let data = toy();
    for method in [Method::Lp, Method::Ip, Method::Ep, Method::Adapter, Method::Ipet] {
        let mut model = toy_model(method);
        let snap = FrozenSnapshot::capture(&model);
        let mut cfg = TrainConfig::new(25);
        cfg.max_steps = Some(100);
        let report = train(&mut model, &data, &cfg).unwrap();
        assert_eq!(report.steps, 100);
        let check = assert_frozen(&model, &snap).unwrap();
        assert!(check.passed(), "{method}");
        assert_eq!(report.frozen_checked, check.checked);
    }
}

#[test]
fn nan_input_reports_divergence_at_first_step() {
    let mut data = toy();
    let (f, t) = (8, 8);
    for s in &mut data.samples {
        s.input = Input::Spectrogram(Tensor::matrix(f, t, vec![f32::NAN; f * t]).unwrap());
    }
    let mut model = toy_model(Method::Ipet);
    match train(&mut model, &data, &TrainConfig::new(1)) {
        Err(Error::Divergence { step, .. }) => assert_eq!(step, 1),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn parallel_and_sequential_runs_agree() {
    let data = toy();
    let run = |execution| {
        let mut model = toy_model(Method::Ipet);
        let mut cfg = TrainConfig::new(3);
        cfg.execution = execution;
        let report = train(&mut model, &data, &cfg).unwrap();
        (report, model)
    };
    let (a, ma) = run(Execution::Sequential);
    let (b, mb) = run(Execution::Parallel);
    assert_eq!(a, b);
    assert_eq!(ma, mb);
}

#[test]
fn moving_average_loss_trends_down() {
    let data = toy();
    for method in [Method::Lp, Method::Ip, Method::Ep, Method::Adapter, Method::Ipet, Method::Ft] {
        let mut model = toy_model(method);
        let mut cfg = TrainConfig::new(50);
        cfg.max_steps = Some(200);
        let losses = train(&mut model, &data, &cfg).unwrap().step_losses;
        // Non-overlapping 20-step windows after a 20-step warmup.
        let means: Vec<f64> = losses[20..].chunks(20).map(|w| w.iter().sum::<f64>() / w.len() as f64).collect();
        for w in means.windows(2) {
            assert!(w[1] <= w[0], "{method}: {means:?}");
        }
    }
}

#[test]
fn config_validation() {
    let mut cfg = TrainConfig::new(1);
    assert_eq!(cfg.learning_rate(Some(Method::Ft)), 1e-4);
    assert_eq!(cfg.learning_rate(Some(Method::Ipet)), 1e-3);
    cfg.batch_size = 0;
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    let mut cfg = TrainConfig::new(1);
    cfg.lr = Some(-1.0);
    assert!(cfg.validate().is_err());
    let mut cfg = TrainConfig::new(1);
    cfg.beta1 = 1.0;
    assert!(cfg.validate().is_err());
    assert!(serde_json::from_str::<TrainConfig>(r#"{"epochs": 1, "momentum": 0.9}"#).is_err());
}
