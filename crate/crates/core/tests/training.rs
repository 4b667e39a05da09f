use semiseg_core::data::FeatureSequence;
use semiseg_core::generative::SyntheticSlds;
use semiseg_core::training::{self, LatentDim, ModelVariant, TrainConfig, TrainedModel};
use semiseg_core::{rng, Error, TcnConfig, Tensor};

fn small_tcn() -> TcnConfig {
    TcnConfig {
        n_blocks: 1,
        n_lags: 1,
        n_filters: 6,
        ..TcnConfig::default()
    }
}

/// Two classes in alternating 20-frame segments, separated along the first
/// feature by a wide margin.
fn separable(t_len: usize, seed: u64) -> FeatureSequence {
    let mut r = rng::seeded(seed);
    let mut rows = Vec::with_capacity(t_len);
    let mut labels = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let y = ((t / 20) % 2) as i32;
        let c = if y == 1 { 2.0 } else { -2.0 };
        rows.push([
            c + 0.1 * rng::standard_normal(&mut r),
            0.1 * rng::standard_normal(&mut r),
        ]);
        labels.push(y);
    }
    FeatureSequence::new("sep", Tensor::from_rows(&rows).unwrap(), 30.0, Some(labels)).unwrap()
}

fn simulated(seed: u64, t_len: usize) -> FeatureSequence {
    let params = SyntheticSlds::default().build(seed).unwrap();
    let traj = params.sample_sequence(t_len, seed + 100).unwrap();
    let labels = traj.y.iter().map(|&k| k as i32).collect();
    FeatureSequence::new(format!("sim{seed}"), traj.x, 30.0, Some(labels)).unwrap()
}

fn config(variant: ModelVariant) -> TrainConfig {
    TrainConfig {
        model_variant: variant,
        learning_rate: 1e-2,
        n_epochs: 3,
        batch_size: 2,
        window: 40,
        anneal_epochs: 2,
        latent_dim: LatentDim::Fixed(2),
        tcn: small_tcn(),
        gmdgm_hidden: 8,
        ..TrainConfig::default()
    }
}

fn params_of(m: &TrainedModel) -> Vec<(String, Tensor)> {
    m.named_tensors()
}

#[test]
fn separable_tcn_reaches_low_cross_entropy() {
    let data = [separable(400, 1)];
    let cfg = TrainConfig {
        n_epochs: 50,
        window: 100,
        ..config(ModelVariant::Tcn)
    };
    let m = training::train(&cfg, &data, 2).unwrap();
    let last = m.history.last().unwrap();
    assert!(last.classification < 0.05, "final CE {}", last.classification);
    let (pred, _) = m.predict(&data[0].features).unwrap();
    let acc = pred
        .iter()
        .zip(&data[0].labels)
        .filter(|(p, y)| **p as i32 == **y)
        .count();
    assert!(acc as f64 / 400.0 > 0.99);
}

#[test]
fn zero_learning_rate_keeps_initial_parameters() {
    let data = [simulated(3, 120)];
    for variant in ModelVariant::ALL {
        let mut cfg = config(variant);
        cfg.learning_rate = 0.0;
        cfg.n_epochs = 2;
        let trained = training::train(&cfg, &data, 3).unwrap();
        let fresh = TrainedModel::init(&cfg, trained.input_dim, 3, 2, trained.standardizer.clone()).unwrap();
        let a = params_of(&trained);
        let b = params_of(&fresh);
        for ((na, ta), (nb, tb)) in a.iter().zip(&b).filter(|((n, _), _)| n != "history") {
            assert_eq!(na, nb);
            assert_eq!(ta, tb, "{variant}: {na} moved");
        }
    }
}

#[test]
fn training_is_deterministic() {
    let data = [simulated(4, 150), simulated(5, 90)];
    for variant in ModelVariant::ALL {
        let cfg = config(variant);
        let a = training::train(&cfg, &data, 3).unwrap();
        let b = training::train(&cfg, &data, 3).unwrap();
        assert_eq!(params_of(&a), params_of(&b), "{variant}");
        assert_eq!(a.history.len(), 3);
        let mut other = cfg.clone();
        other.seed = 9;
        let c = training::train(&other, &data, 3).unwrap();
        assert_ne!(params_of(&a), params_of(&c), "{variant}");
    }
}

#[test]
fn named_tensors_rebuild_identical_predictions() {
    let data = [simulated(6, 100)];
    for variant in ModelVariant::ALL {
        let cfg = config(variant);
        let m = training::train(&cfg, &data, 3).unwrap();
        let back =
            TrainedModel::from_named_tensors(&cfg, m.input_dim, 3, m.latent_dim, m.named_tensors()).unwrap();
        let (_, p1) = m.predict(&data[0].features).unwrap();
        let (_, p2) = back.predict(&data[0].features).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(m.latents(&data[0].features).unwrap(), back.latents(&data[0].features).unwrap());
        assert_eq!(m.history, back.history);
        let mut missing = m.named_tensors();
        missing.remove(0);
        assert!(TrainedModel::from_named_tensors(&cfg, m.input_dim, 3, m.latent_dim, missing).is_err());
    }
}

#[test]
fn supervised_needs_labels() {
    let mut s = simulated(7, 80);
    s.labels.iter_mut().for_each(|y| *y = -1);
    let err = training::train(&config(ModelVariant::Tcn), &[s.clone()], 3).unwrap_err();
    assert!(matches!(err, Error::NoLabeledFrames));
    // generative variants learn from unlabeled frames alone
    training::train(&config(ModelVariant::S3lds), &[s], 3).unwrap();
}

#[test]
fn divergent_run_reports_nan_term() {
    let mut s = simulated(8, 80);
    let cfg = TrainConfig {
        learning_rate: 1e6,
        n_epochs: 40,
        ..config(ModelVariant::S3nlds)
    };
    s.features = s.features.map(|v| v * 1e3);
    match training::train(&cfg, &[s], 3) {
        Err(Error::NanLoss { .. }) => {}
        other => panic!("expected a NaN guard, got {:?}", other.map(|m| m.history.last().copied())),
    }
}

#[test]
fn window_shorter_than_receptive_field_is_rejected() {
    let cfg = TrainConfig {
        window: 10,
        tcn: TcnConfig::default(),
        ..config(ModelVariant::S3lds)
    };
    assert!(training::train(&cfg, &[simulated(1, 60)], 3).is_err());
    let framewise = TrainConfig {
        model_variant: ModelVariant::Gmdgm,
        ..cfg
    };
    assert!(framewise.validate().is_ok());
}

#[test]
fn latent_width_follows_variant() {
    let data = [simulated(2, 80)];
    let tcn = training::train(&config(ModelVariant::Tcn), &data, 3).unwrap();
    assert_eq!(tcn.latents(&data[0].features).unwrap().cols(), 6);
    let s3 = training::train(&config(ModelVariant::S3lds), &data, 3).unwrap();
    assert_eq!(s3.latents(&data[0].features).unwrap().cols(), 2);
}

#[test]
fn experiment_reports_population_std() {
    let train_set = [simulated(10, 120)];
    let test_set = [simulated(11, 60)];
    let s = training::run_experiment(&config(ModelVariant::Tcn), &train_set, &test_set, 3, 2).unwrap();
    assert_eq!(s.macro_f1.len(), 2);
    let (m, sd) = training::mean_std(&s.macro_f1);
    assert_eq!((s.mean, s.std), (m, sd));
    assert!(s.macro_f1.iter().all(|f| (0.0..=1.0).contains(f)));
}
