mod common;

use pitomo_core::datastore::{split, Dataset};
use pitomo_core::geometry::{build_cmatrix, two_camera_chords, ContributionMatrix, Grid};
use pitomo_core::network::*;
use pitomo_core::phantom::*;
use pitomo_core::trainer::*;
use pitomo_core::Error;

fn data(numz: usize, numr: usize, n: usize, count: usize, noise: f64) -> (ContributionMatrix, Dataset) {
    let grid = Grid::new(1.0, 2.0, -0.5, 0.5, numr, numz).unwrap();
    let c = build_cmatrix(&grid, &two_camera_chords(&grid, n), 5).unwrap();
    let noise = if noise > 0.0 { NoiseSpec::gaussian_relative(noise) } else { NoiseSpec::none() };
    let d = generate_dataset(&grid, &c, &PhantomRule::default(), &noise, count, 0).unwrap();
    (c, d)
}

fn small_cfg(seed: u64) -> TrainConfig {
    TrainConfig {
        lr0: 1e-3,
        lr_min: 1e-4,
        period: 4,
        max_epochs: 4,
        patience: 4,
        batch_size: 16,
        c1: 0.618,
        seed,
        loss_mode: LossMode::Pilf,
        ..TrainConfig::default()
    }
}

fn small_spec(pi: bool) -> ModelSpec {
    ModelSpec::new(Backbone::Vgg, pi, Activation::Softplus, 6, 8, 8)
}

#[test]
fn overfits_a_small_set() {
    let (c, d) = data(12, 12, 8, 32, 0.0);
    for seed in 0..3 {
        let spec = ModelSpec::new(Backbone::Res, false, Activation::Softplus, 8, 12, 12);
        // near-constant learning rate over the 200 full-batch steps
        let cfg = TrainConfig {
            lr0: 3e-3,
            lr_min: 3e-4,
            period: 100_000,
            max_epochs: 200,
            patience: 200,
            batch_size: 32,
            lambda: 0.0,
            seed,
            loss_mode: LossMode::Loss1Only,
            ..TrainConfig::default()
        };
        let (_, h) = train(Model::new(spec, seed).unwrap(), &d, &d, &c, &cfg).unwrap();
        assert_eq!(h.steps.len(), 200);
        let (first, last) = (h.steps[0].loss1, h.steps[199].loss1);
        assert!(last < 1e-3 * first, "seed {seed}: {first:.3e} -> {last:.3e}");
    }
}

#[test]
fn history_contracts_and_determinism() {
    let (c, d) = data(8, 8, 6, 96, 0.03);
    let (tr, va, _) = split(&d, [0.5, 0.25, 0.25], 1).unwrap();
    let cfg = small_cfg(3);
    let run = || train(Model::new(small_spec(true), 3).unwrap(), &tr, &va, &c, &cfg).unwrap();
    let (m1, h1) = run();
    let (m2, h2) = run();
    assert_eq!(h1, h2);
    assert_eq!(h1.epochs.len(), 4);
    assert_eq!(h1.stop_reason, Some(StopReason::MaxEpochs));
    for r in &h1.epochs {
        assert_eq!(r.lr, cosine_lr(r.epoch, &cfg));
    }
    for s in &h1.steps {
        let lhs = s.w2 * s.loss2;
        let rhs = cfg.c1 * s.loss1;
        assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs(), "step {}: {lhs} vs {rhs}", s.step);
    }
    // returned model is the best-validation one
    let best = h1.epochs.iter().map(|r| r.valid_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(h1.best_valid_loss(), Some(best));
    let again = validate_model(&m1, &va, &c, &cfg).unwrap().loss;
    assert!((again - best).abs() <= 1e-12 * best);

    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(&m1, dir.path().join("a.ckpt"), &[], serde_json::Value::Null).unwrap();
    save_checkpoint(&m2, dir.path().join("b.ckpt"), &[], serde_json::Value::Null).unwrap();
    assert_eq!(
        std::fs::read(dir.path().join("a.ckpt")).unwrap(),
        std::fs::read(dir.path().join("b.ckpt")).unwrap()
    );
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let (c, d) = data(8, 8, 6, 64, 0.0);
    let (tr, va, _) = split(&d, [0.5, 0.25, 0.25], 2).unwrap();
    let cfg = small_cfg(5);
    let dir = tempfile::tempdir().unwrap();
    let saved = dir.path().join("state.ckpt");

    let mut full = TrainState::new(Model::new(small_spec(false), 5).unwrap(), &cfg);
    train_from(&mut full, &tr, &va, &c, &cfg, |s| {
        if s.next_epoch == 2 {
            s.save(&cfg, &saved)?;
        }
        Ok(())
    })
    .unwrap();

    let (mut resumed, stored_cfg) = TrainState::load(&saved).unwrap();
    assert_eq!(stored_cfg, cfg);
    assert_eq!(resumed.next_epoch, 2);
    train_from(&mut resumed, &tr, &va, &c, &cfg, |_| Ok(())).unwrap();
    assert_eq!(resumed.history, full.history);
    for (a, b) in resumed.model.params().iter().zip(full.model.params()) {
        assert_eq!(a.value.data(), b.value.data(), "{}", a.name);
    }
}

#[test]
fn max_steps_caps_training() {
    let (c, d) = data(8, 8, 6, 64, 0.0);
    let cfg = TrainConfig { max_steps: Some(5), ..small_cfg(1) };
    let (_, h) = train(Model::new(small_spec(false), 1).unwrap(), &d, &d, &c, &cfg).unwrap();
    assert_eq!(h.steps.len(), 5);
    assert_eq!(h.stop_reason, Some(StopReason::MaxSteps));
}

#[test]
fn failures_are_reported() {
    let (c, d) = data(8, 8, 6, 16, 0.0);
    let mut labels = d.labels().to_vec();
    labels[3] = f32::INFINITY;
    let bad = Dataset::new(d.inputs().to_vec(), labels, d.manifest().clone()).unwrap();
    let err = train(Model::new(small_spec(false), 0).unwrap(), &bad, &d, &c, &small_cfg(0));
    assert!(matches!(err, Err(Error::NonFiniteLoss { epoch: 0, batch: 0 })));

    let wrong = ModelSpec::new(Backbone::Vgg, false, Activation::Relu, 7, 8, 8);
    let err = train(Model::new(wrong, 0).unwrap(), &d, &d, &c, &small_cfg(0));
    assert!(matches!(err, Err(Error::ShapeMismatch { .. })));
}

#[test]
fn evaluation_reports() {
    let (c, d) = data(8, 8, 6, 10, 0.0);
    let report = evaluate_predictions(d.labels(), &d, &c, 3, "phantom", "oracle").unwrap();
    assert_eq!(report.e1, 0.0);
    assert!(report.e2 < 1e-6);
    assert_eq!(report.samples.len(), 3);
    assert_eq!(report.samples[0].eps1.len(), 64);
    assert_eq!(report.samples[0].back_projection.len(), 6);

    let model = Model::new(small_spec(true), 0).unwrap();
    let r = evaluate(&model, &d, &c, 0, "phantom").unwrap();
    assert_eq!(r.model, "VggOnion_PI");
    assert!(r.e2 > 0.0);
    let csv = table_csv(&[report, r]);
    assert!(csv.starts_with("dataset,model,E1,E2\nphantom,oracle,0.0000e0,"));
    assert_eq!(csv.lines().count(), 3);
}
