use imbassl::augment::{perturb_vector, weak_augment, strong_augment, PerturbMode, PerturbSpec, RgbImage};
use imbassl::autodiff::{kl_div_values, softmax_values};
use imbassl::data::{random_undersample, smote_oversample, stratified_split, Dataset};
use imbassl::losses::{blend_target, compute_k, consistency_abcl, pair_k, ClassFrequencyTable, ConsistencyConfig};
use imbassl::metrics::{confusion_matrix, g_mean, mann_whitney_auc, per_class_recall, roc_auc, uar};
use imbassl::Mlp64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn prob_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-6.0f64..6.0, n).prop_map(|l| softmax_values(&l).unwrap())
}

fn freq_table(n: usize) -> impl Strategy<Value = ClassFrequencyTable<f64>> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|raw| {
        let s: f64 = raw.iter().sum();
        ClassFrequencyTable::new(raw.iter().map(|v| v / s).collect()).unwrap()
    })
}

proptest! {
    #[test]
    fn k_stays_in_unit_interval(a in 0.0f64..=1.0, b in 0.0f64..=1.0, g in 0.001f64..=1.0) {
        let k = compute_k(a, b, g);
        prop_assert!((0.0..=1.0).contains(&k));
    }

    #[test]
    fn k_is_monotone_in_frequency_gap(a in 0.0f64..=1.0, b in 0.0f64..=1.0, d in 0.0f64..0.5, g in 0.001f64..=1.0) {
        prop_assert!(compute_k((a + d).min(1.0), b, g) >= compute_k(a, b, g));
    }

    #[test]
    fn blend_is_a_distribution((z, zh) in (3usize..9).prop_flat_map(|n| (prob_vec(n), prob_vec(n))), k in 0.0f64..=1.0) {
        let b = blend_target(&z, &zh, k);
        prop_assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(b.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn kl_is_nonnegative((t, p) in (2usize..9).prop_flat_map(|n| (prob_vec(n), prob_vec(n)))) {
        prop_assert!(kl_div_values(&t, &p) >= -1e-12);
        prop_assert!(kl_div_values(&t, &t).abs() < 1e-12);
    }

    #[test]
    fn abcl_vanishes_on_identical_predictions(z in prob_vec(5), table in freq_table(5)) {
        prop_assert!(consistency_abcl(&z, &z, &table, &ConsistencyConfig::default()).abs() < 1e-12);
        prop_assert_eq!(pair_k(&z, &z, &table, 0.7), 0.5);
    }

    #[test]
    fn softmax_sums_to_one(l in prop::collection::vec(-50.0f64..50.0, 1..12)) {
        let p = softmax_values(&l).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_auc_equals_rank_statistic(
        pts in prop::collection::vec((0u8..20, any::<bool>()), 2..120)
    ) {
        let scores: Vec<f64> = pts.iter().map(|(s, _)| *s as f64 / 20.0).collect();
        let pos: Vec<bool> = pts.iter().map(|(_, p)| *p).collect();
        prop_assume!(pos.iter().any(|p| *p) && pos.iter().any(|p| !*p));
        let a = roc_auc(&scores, &pos).unwrap();
        let b = mann_whitney_auc(&scores, &pos).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn gmean_never_exceeds_uar(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..200)) {
        let preds: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let labels: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let cm = confusion_matrix(&preds, &labels, 4).unwrap();
        let u = uar(&cm);
        prop_assert!((0.0..=1.0).contains(&u));
        prop_assert!(g_mean(&cm) <= u + 1e-12);
        prop_assert_eq!(cm.total(), pairs.len() as u64);
        prop_assert!(per_class_recall(&cm).iter().all(|r| (0.0..=1.0).contains(r)));
    }

    #[test]
    fn stratified_split_partitions_and_preserves_classes(
        labels in prop::collection::vec(0usize..3, 30..200), seed in any::<u64>()
    ) {
        let rows: Vec<Vec<f64>> = (0..labels.len()).map(|i| vec![i as f64]).collect();
        let data = Dataset::labeled(1, &rows, labels.clone(), 3).unwrap();
        let parts = stratified_split(&data, &[0.7, 0.2, 0.1], seed).unwrap();
        let mut seen: Vec<f64> = parts.iter().flat_map(|p| p.features().to_vec()).collect();
        seen.sort_by(f64::total_cmp);
        prop_assert_eq!(seen, (0..labels.len()).map(|i| i as f64).collect::<Vec<_>>());
        let global = data.class_counts();
        for (part, r) in parts.iter().zip([0.7, 0.2, 0.1]) {
            for c in 0..3 {
                let exact = global[c] as f64 * r;
                prop_assert!((part.class_counts()[c] as f64 - exact).abs() < 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn smote_stays_in_class_bounding_box(
        pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..12), seed in any::<u64>()
    ) {
        let mut rows: Vec<Vec<f64>> = pts.iter().map(|(a, b)| vec![*a, *b]).collect();
        let mut labels = vec![1; rows.len()];
        for i in 0..30 {
            rows.push(vec![20.0 + i as f64, 0.0]);
            labels.push(0);
        }
        let data = Dataset::labeled(2, &rows, labels, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = smote_oversample(&data, &[30, 30], 5, &mut rng).unwrap();
        prop_assert_eq!(out.class_counts(), vec![30, 30]);
        let lo = |j: usize| pts.iter().map(|p| if j == 0 { p.0 } else { p.1 }).fold(f64::INFINITY, f64::min);
        let hi = |j: usize| pts.iter().map(|p| if j == 0 { p.0 } else { p.1 }).fold(f64::NEG_INFINITY, f64::max);
        for (row, &y) in out.rows().zip(out.labels().unwrap()) {
            if y == 1 {
                for j in 0..2 {
                    prop_assert!(row[j] >= lo(j) - 1e-12 && row[j] <= hi(j) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn undersample_hits_targets(n0 in 5usize..40, n1 in 5usize..40, t0 in 0usize..5, t1 in 0usize..5, seed in any::<u64>()) {
        let labels: Vec<usize> = std::iter::repeat_n(0, n0).chain(std::iter::repeat_n(1, n1)).collect();
        let rows: Vec<Vec<f64>> = (0..labels.len()).map(|i| vec![i as f64]).collect();
        let data = Dataset::labeled(1, &rows, labels, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = random_undersample(&data, &[t0, t1], &mut rng).unwrap();
        prop_assert_eq!(out.class_counts(), vec![t0, t1]);
    }

    #[test]
    fn perturbation_is_reproducible(x in prop::collection::vec(-3.0f64..3.0, 1..10), sigma in 0.0f64..2.0, seed in any::<u64>()) {
        let spec = PerturbSpec::vector(sigma, seed);
        prop_assert_eq!(perturb_vector(&x, &spec).unwrap(), perturb_vector(&x, &spec).unwrap());
        prop_assert_eq!(perturb_vector(&x, &spec).unwrap().len(), x.len());
    }

    #[test]
    fn checkpoint_round_trip_is_exact(seed in any::<u64>(), h in 1usize..9) {
        let m = Mlp64::init(&[3, h, 2], seed).unwrap();
        let back = Mlp64::from_checkpoint_str(&m.to_checkpoint_string()).unwrap();
        prop_assert_eq!(back, m);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn augmentations_keep_shape_and_range(seed in any::<u64>(), w in 4usize..12, h in 4usize..12) {
        let img = RgbImage::from_fn(w, h, |c, x, y| ((c + 2 * x + 3 * y) % 7) as f64 / 6.0).unwrap();
        for mode in [PerturbMode::Weak, PerturbMode::Strong] {
            let spec = PerturbSpec { mode, noise_sigma: 0.0, rng_seed: seed };
            let out = match mode {
                PerturbMode::Weak => weak_augment(&img, &spec).unwrap(),
                _ => strong_augment(&img, &spec).unwrap(),
            };
            prop_assert_eq!((out.width(), out.height()), (w, h));
            prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
