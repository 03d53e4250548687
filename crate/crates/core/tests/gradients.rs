//! Tape gradients against central differences computed from independent
//! reference implementations.

use imbassl::autodiff::finite_diff_grad;
use imbassl::data::Batch;
use imbassl::losses::{graph, Blending, ClassFrequencyTable, ConsistencyConfig, ConsistencyKind, SupervisedLoss};
use imbassl::trainer::{step_gradients, TrainConfig};
use imbassl::{Mlp64, Tape64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn kl(t: &[f64], p: &[f64]) -> f64 {
    t.iter()
        .zip(p)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| a * (a.ln() - b.ln()))
        .sum()
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

fn random_table(rng: &mut ChaCha8Rng, c: usize) -> ClassFrequencyTable<f64> {
    let raw: Vec<f64> = (0..c).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    ClassFrequencyTable::new(raw.iter().map(|v| v / s).collect()).unwrap()
}

/// Gradient of a consistency loss with respect to both logit vectors.
fn tape_grad(a: &[f64], b: &[f64], table: &ClassFrequencyTable<f64>, cfg: &ConsistencyConfig) -> (f64, Vec<f64>) {
    let tape = Tape64::new();
    let la = tape.vector(a.to_vec());
    let lb = tape.vector(b.to_vec());
    let z = tape.softmax(la).unwrap();
    let zh = tape.softmax(lb).unwrap();
    let loss = graph::consistency_loss(&tape, z, zh, table, cfg).unwrap();
    tape.backward(loss).unwrap();
    let mut g = la.grad();
    g.extend(lb.grad());
    (loss.item(), g)
}

#[test]
fn abcl_gradient_matches_frozen_target_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let c = 7;
    for _ in 0..100 {
        let table = random_table(&mut rng, c);
        let a: Vec<f64> = (0..c).map(|_| rng.random_range(-3.0..3.0)).collect();
        let b: Vec<f64> = (0..c).map(|_| rng.random_range(-3.0..3.0)).collect();
        let gamma = rng.random_range(0.05..=1.0);
        let cfg = ConsistencyConfig {
            gamma,
            ..ConsistencyConfig::default()
        };
        let (z, zh) = (softmax(&a), softmax(&b));
        let k = (gamma * (table.freq(argmax(&z)) - table.freq(argmax(&zh))) + 0.5).clamp(0.0, 1.0);
        let frozen: Vec<f64> = z.iter().zip(&zh).map(|(p, q)| (1.0 - k) * p + k * q).collect();
        let x: Vec<f64> = a.iter().chain(&b).copied().collect();
        let oracle = finite_diff_grad(
            |x: &[f64]| kl(&frozen, &softmax(&x[..c])) + kl(&frozen, &softmax(&x[c..])),
            &x,
            1e-6,
        );
        let (value, analytic) = tape_grad(&a, &b, &table, &cfg);
        assert!((value - (kl(&frozen, &z) + kl(&frozen, &zh))).abs() < 1e-12);
        let e = rel_err(&analytic, &oracle);
        assert!(e < 1e-4, "relative error {e}");
    }
}

#[test]
fn cl_target_path_carries_no_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let table = random_table(&mut rng, 5);
    for _ in 0..50 {
        let a: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (_, g) = tape_grad(&a, &b, &table, &ConsistencyConfig::of_kind(ConsistencyKind::Cl));
        assert!(g[..5].iter().all(|v| *v == 0.0));
        assert!(g[5..].iter().any(|v| *v != 0.0));
    }
}

#[test]
fn selective_and_scl_gradients_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let c = 4;
    for i in 0..60 {
        let table = random_table(&mut rng, c);
        let a: Vec<f64> = (0..c).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..c).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (z, zh) = (softmax(&a), softmax(&b));
        let cfg = if i % 2 == 0 {
            ConsistencyConfig {
                blending: Blending::Selective,
                gamma: 1.0,
                ..ConsistencyConfig::default()
            }
        } else {
            ConsistencyConfig::of_kind(ConsistencyKind::Scl)
        };
        let (target, w_orig, w_aug) = match cfg.kind {
            ConsistencyKind::Scl => {
                let f = table.freqs();
                let (lo, hi) = f.iter().fold((1.0f64, 0.0f64), |(l, h), v| (l.min(*v), h.max(*v)));
                let w = 0.8 + 0.2 * (f[argmax(&z)] - lo) / (hi - lo);
                (z.clone(), 0.0, w)
            }
            _ if argmax(&z) == argmax(&zh) => (z.clone(), 0.0, 1.0),
            _ => {
                let k = (table.freq(argmax(&z)) - table.freq(argmax(&zh)) + 0.5).clamp(0.0, 1.0);
                (z.iter().zip(&zh).map(|(p, q)| (1.0 - k) * p + k * q).collect(), 1.0, 1.0)
            }
        };
        let x: Vec<f64> = a.iter().chain(&b).copied().collect();
        let oracle = finite_diff_grad(
            |x: &[f64]| w_orig * kl(&target, &softmax(&x[..c])) + w_aug * kl(&target, &softmax(&x[c..])),
            &x,
            1e-6,
        );
        let (_, analytic) = tape_grad(&a, &b, &table, &cfg);
        assert!(rel_err(&analytic, &oracle) < 1e-4);
    }
}

fn random_batch(rng: &mut ChaCha8Rng, dim: usize, c: usize, nl: usize, nu: usize) -> Batch {
    let v = |rng: &mut ChaCha8Rng| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>();
    Batch {
        labeled: (0..nl).map(|_| (v(rng), rng.random_range(0..c))).collect(),
        unlabeled: (0..nu)
            .map(|_| {
                let x = v(rng);
                let noisy = x.iter().map(|a| a + rng.random_range(-0.3..0.3)).collect();
                (x, noisy)
            })
            .collect(),
    }
}

/// Full training objective with consistency targets held at their values
/// under `frozen_at`.
fn frozen_objective(model: &Mlp64, frozen_at: &Mlp64, batch: &Batch, table: &ClassFrequencyTable<f64>, gamma: f64) -> f64 {
    let proba = |m: &Mlp64, x: &[f64]| m.predict_proba(x).unwrap().into_inner();
    let sup: f64 = batch
        .labeled
        .iter()
        .map(|(x, y)| {
            let p = proba(model, x);
            -(1.0 - table.freq(*y)) * p[*y].ln()
        })
        .sum::<f64>()
        / batch.labeled.len() as f64;
    let cons: f64 = batch
        .unlabeled
        .iter()
        .map(|(x, xa)| {
            let (z0, zh0) = (proba(frozen_at, x), proba(frozen_at, xa));
            let k = (gamma * (table.freq(argmax(&z0)) - table.freq(argmax(&zh0))) + 0.5).clamp(0.0, 1.0);
            let t: Vec<f64> = z0.iter().zip(&zh0).map(|(p, q)| (1.0 - k) * p + k * q).collect();
            kl(&t, &proba(model, x)) + kl(&t, &proba(model, xa))
        })
        .sum::<f64>()
        / batch.unlabeled.len() as f64;
    sup + cons
}

#[test]
fn full_step_gradient_matches_frozen_batch_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let table = ClassFrequencyTable::new(vec![0.6, 0.3, 0.1]).unwrap();
    for seed in 0..3 {
        let model = Mlp64::init(&[4, 6, 5, 3], seed).unwrap();
        let batch = random_batch(&mut rng, 4, 3, 8, 22);
        let cfg = TrainConfig {
            supervised: SupervisedLoss::WeightedCe,
            consistency: Some(ConsistencyConfig::default()),
            ..TrainConfig::default()
        };
        let (losses, grads) = step_gradients(&model, &batch, &table, &cfg).unwrap();
        let analytic: Vec<f64> = grads.concat();
        let theta = model.params_flat();
        let mut probe = model.clone();
        let oracle = finite_diff_grad(
            |p: &[f64]| {
                probe.set_params_flat(p).unwrap();
                frozen_objective(&probe, &model, &batch, &table, 0.4)
            },
            &theta,
            1e-6,
        );
        assert!((losses.total - frozen_objective(&model, &model, &batch, &table, 0.4)).abs() < 1e-12);
        let e = rel_err(&analytic, &oracle);
        assert!(e < 1e-4, "relative error {e}");
    }
}

#[test]
fn f32_gradients_track_f64() {
    let table64 = ClassFrequencyTable::new(vec![0.7, 0.2, 0.1]).unwrap();
    let table32: ClassFrequencyTable<f32> = table64.cast();
    let a = [0.4, -1.0, 0.7];
    let b = [1.2, 0.1, -0.5];
    let (_, g64) = tape_grad(&a, &b, &table64, &ConsistencyConfig::default());
    let tape = imbassl::Tape32::new();
    let la = tape.vector(a.iter().map(|v| *v as f32).collect());
    let lb = tape.vector(b.iter().map(|v| *v as f32).collect());
    let z = tape.softmax(la).unwrap();
    let zh = tape.softmax(lb).unwrap();
    let loss = graph::consistency_loss(&tape, z, zh, &table32, &ConsistencyConfig::default()).unwrap();
    tape.backward(loss).unwrap();
    let g32: Vec<f64> = la.grad().into_iter().chain(lb.grad()).map(f64::from).collect();
    assert!(rel_err(&g32, &g64) < 1e-4);
}
