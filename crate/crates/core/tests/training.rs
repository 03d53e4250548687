use imbassl::data::{generate_gaussian_mixture, simplex_means, GaussianMixtureSpec, SyntheticSplits};
use imbassl::losses::ConsistencyConfig;
use imbassl::metrics::evaluate;
use imbassl::trainer::{train, TrainConfig, TrainData};
use imbassl::{Mlp32, Mlp64};

fn splits(fractions: Vec<f64>, separation: f64, n: usize, seed: u64) -> SyntheticSplits {
    let c = fractions.len();
    generate_gaussian_mixture(&GaussianMixtureSpec {
        class_fractions: fractions,
        means: simplex_means(c, 4, separation),
        cov_scale: 1.0,
        n_labeled: n,
        n_unlabeled: 2 * n,
        n_val: n,
        n_test: n,
        seed,
    })
    .unwrap()
}

#[test]
fn zero_epochs_returns_initial_model() {
    let s = splits(vec![0.5, 0.5], 3.0, 40, 1);
    let data = TrainData::new(&s.labeled, &s.unlabeled, &s.val).unwrap();
    let cfg = TrainConfig {
        epochs: 0,
        seed: 5,
        ..TrainConfig::default()
    };
    let out = train::<f64>(&cfg, &[4, 8, 2], &data).unwrap();
    let init = Mlp64::init(&[4, 8, 2], imbassl::rng::derive_seed(5, imbassl::rng::Stream::Init)).unwrap();
    assert_eq!(out.model, init);
    assert!(out.history.epochs.is_empty());
    assert_eq!(out.history.best_epoch, None);
}

#[test]
fn separable_data_is_learned() {
    let s = splits(vec![0.5, 0.5], 6.0, 200, 2);
    let data = TrainData::new(&s.labeled, &s.unlabeled, &s.val).unwrap();
    let cfg = TrainConfig {
        consistency: None,
        seed: 3,
        ..TrainConfig::default()
    };
    let out = train::<f64>(&cfg, &[4, 16, 2], &data).unwrap();
    let acc = {
        let r = evaluate(&out.model, &s.labeled).unwrap();
        let cm = &r.confusion;
        (cm[0][0] + cm[1][1]) as f64 / s.labeled.len() as f64
    };
    assert!(acc > 0.95, "train accuracy {acc}");
}

#[test]
fn runs_are_reproducible() {
    let s = splits(vec![0.7, 0.2, 0.1], 2.5, 60, 3);
    let data = TrainData::new(&s.labeled, &s.unlabeled, &s.val).unwrap();
    let cfg = TrainConfig {
        epochs: 4,
        seed: 9,
        ..TrainConfig::default()
    };
    let a = train::<f64>(&cfg, &[4, 8, 3], &data).unwrap();
    let b = train::<f64>(&cfg, &[4, 8, 3], &data).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.model, b.model);
    assert_eq!(a.history.to_csv(), b.history.to_csv());
    let other = train::<f64>(&TrainConfig { seed: 10, ..cfg }, &[4, 8, 3], &data).unwrap();
    assert_ne!(a.model, other.model);
}

#[test]
fn kept_model_has_the_best_validation_uar() {
    let s = splits(vec![0.6, 0.3, 0.1], 2.0, 80, 4);
    let data = TrainData::new(&s.labeled, &s.unlabeled, &s.val).unwrap();
    let cfg = TrainConfig {
        epochs: 8,
        sgd: imbassl::optim::SgdConfig {
            lr: 0.01,
            ..Default::default()
        },
        seed: 2,
        ..TrainConfig::default()
    };
    let out = train::<f64>(&cfg, &[4, 8, 3], &data).unwrap();
    let h = &out.history;
    let max = h.epochs.iter().map(|e| e.val.uar).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(h.best_val_uar, Some(max));
    let first_best = h.epochs.iter().find(|e| e.val.uar == max).unwrap().epoch;
    assert_eq!(h.best_epoch, Some(first_best));
    assert_eq!(evaluate(&out.model, &s.val).unwrap().uar, max);
    assert_eq!(h.to_csv().lines().count(), 9);
}

#[test]
fn zero_consistency_weight_follows_supervised_trajectory() {
    let s = splits(vec![0.7, 0.3], 2.0, 40, 5);
    let data = TrainData::new(&s.labeled, &s.unlabeled, &s.val).unwrap();
    let none = TrainConfig {
        epochs: 3,
        consistency: None,
        seed: 1,
        ..TrainConfig::default()
    };
    let zero = TrainConfig {
        consistency: Some(ConsistencyConfig {
            unsup_weight: 0.0,
            ..ConsistencyConfig::default()
        }),
        ..none.clone()
    };
    let a = train::<f64>(&none, &[4, 6, 2], &data).unwrap();
    let b = train::<f64>(&zero, &[4, 6, 2], &data).unwrap();
    assert_eq!(a.model, b.model);
}

#[test]
fn divergence_is_reported_not_raised() {
    let rows: Vec<Vec<f64>> = (0..16).map(|i| vec![1e300 * (i % 4) as f64, -1e300, 1e299, 0.0]).collect();
    let labels: Vec<usize> = (0..16).map(|i| i % 2).collect();
    let labeled = imbassl::data::Dataset::labeled(4, &rows, labels, 2).unwrap();
    let unlabeled = labeled.without_labels();
    let data = TrainData::new(&labeled, &unlabeled, &labeled).unwrap();
    let cfg = TrainConfig {
        epochs: 20,
        sgd: imbassl::optim::SgdConfig {
            lr: 1e10,
            ..Default::default()
        },
        ..TrainConfig::default()
    };
    let out = train::<f64>(&cfg, &[4, 6, 2], &data).unwrap();
    let msg = out.history.failed.expect("run should diverge");
    assert!(msg.contains("epoch"), "{msg}");
    assert!(out.history.epochs.len() < 20);
}

#[test]
fn mismatched_dims_are_rejected() {
    let s = splits(vec![0.5, 0.5], 2.0, 20, 7);
    let data = TrainData::new(&s.labeled, &s.unlabeled, &s.val).unwrap();
    assert!(train::<f64>(&TrainConfig::default(), &[3, 4, 2], &data).is_err());
    assert!(train::<f64>(&TrainConfig::default(), &[4, 4, 3], &data).is_err());
}

#[test]
fn single_precision_training_runs() {
    let s = splits(vec![0.5, 0.5], 6.0, 60, 8);
    let data = TrainData::new(&s.labeled, &s.unlabeled, &s.val).unwrap();
    let cfg = TrainConfig {
        epochs: 30,
        sgd: imbassl::optim::SgdConfig {
            lr: 0.01,
            ..Default::default()
        },
        ..TrainConfig::default()
    };
    let out = train::<f32>(&cfg, &[4, 8, 2], &data).unwrap();
    let _: &Mlp32 = &out.model;
    assert!(out.history.best_val_uar.unwrap() > 0.9);
}
