use pc3::engine::{mu_update, ReferenceAssignment};
use pc3::metrics::{krocc, plcc, srcc};
use pc3::rng::seeded_rng;
use pc3::{CalibrationConfig, FeatureTable, LabelVector, Mlp};
use proptest::prelude::*;

fn pairs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (3usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(-100.0f64..100.0, n),
            prop::collection::vec(-100.0f64..100.0, n),
        )
    })
}

fn non_constant(v: &[f64]) -> bool {
    v.iter().any(|x| *x != v[0])
}

/// A head whose output is the constant `s` for every pair.
fn constant_head(dim: usize, s: f64) -> Mlp {
    let mut head = Mlp::new(&[dim, 1], &mut seeded_rng(0)).unwrap();
    head.layers_mut()[0].weights.iter_mut().for_each(|w| *w = 0.0);
    head.layers_mut()[0].bias[0] = s;
    head
}

proptest! {
    #[test]
    fn correlations_are_symmetric((a, b) in pairs()) {
        prop_assume!(non_constant(&a) && non_constant(&b));
        prop_assert!((srcc(&a, &b).unwrap() - srcc(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((plcc(&a, &b).unwrap() - plcc(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert_eq!(krocc(&a, &b).unwrap(), krocc(&b, &a).unwrap());
    }

    #[test]
    fn rank_metrics_ignore_monotone_maps((a, b) in pairs()) {
        prop_assume!(non_constant(&a) && non_constant(&b));
        let warped: Vec<f64> = a.iter().map(|x| (x / 50.0).exp() + x.powi(3)).collect();
        prop_assert!((srcc(&a, &b).unwrap() - srcc(&warped, &b).unwrap()).abs() < 1e-12);
        prop_assert_eq!(krocc(&a, &b).unwrap(), krocc(&warped, &b).unwrap());
    }

    #[test]
    fn correlations_are_bounded((a, b) in pairs()) {
        prop_assume!(non_constant(&a) && non_constant(&b));
        for v in [srcc(&a, &b).unwrap(), plcc(&a, &b).unwrap(), krocc(&a, &b).unwrap()] {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&v));
        }
    }

    #[test]
    fn normalization_round_trips(raw in prop::collection::vec(-1e3f64..1e3, 2..50)) {
        prop_assume!(non_constant(&raw));
        let labels = LabelVector::normalize(&raw).unwrap();
        let lo = labels.values().iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = labels.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(lo, 0.0);
        prop_assert_eq!(hi, 1.0);
        let span = labels.scale().span();
        for (back, orig) in labels.denormalize().iter().zip(&raw) {
            prop_assert!((back - orig).abs() <= 1e-12 * span.max(1.0));
        }
    }

    #[test]
    fn update_is_a_convex_combination(
        mu in prop::collection::vec(0.0f64..1.0, 4..20),
        s in -0.5f64..0.5,
        alpha in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let n = mu.len();
        let features = FeatureTable::new((0..n).map(|i| i.to_string()).collect(), 1, vec![0.0; n]).unwrap();
        let refs = pc3::engine::sample_references(n, &mut seeded_rng(seed)).unwrap();
        let head = constant_head(1, s);
        let config = CalibrationConfig { alpha, warmup_epochs: 0, ..Default::default() };
        let next = mu_update(&mu, &head, &features, &refs, &mu, &config, 0).unwrap();
        for i in 0..n {
            let target = s + mu[refs.refs[i]];
            let (lo, hi) = (mu[i].min(target), mu[i].max(target));
            prop_assert!(next[i] >= lo - 1e-15 && next[i] <= hi + 1e-15);
        }
    }

    #[test]
    fn zero_score_update_stays_in_hull(
        mu in prop::collection::vec(0.0f64..1.0, 4..20),
        alpha in 0.0f64..=1.0,
        rounds in 1usize..20,
    ) {
        // S = 0: every target is another estimate, so the range can only shrink.
        let n = mu.len();
        let features = FeatureTable::new((0..n).map(|i| i.to_string()).collect(), 1, vec![0.0; n]).unwrap();
        let head = constant_head(1, 0.0);
        let config = CalibrationConfig { alpha, warmup_epochs: 0, ..Default::default() };
        let lo = mu.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = mu.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut cur = mu.clone();
        let mut rng = seeded_rng(rounds as u64);
        for t in 0..rounds {
            let refs: ReferenceAssignment = pc3::engine::sample_references(n, &mut rng).unwrap();
            cur = mu_update(&cur, &head, &features, &refs, &mu, &config, t).unwrap();
        }
        prop_assert!(cur.iter().all(|v| *v >= lo - 1e-12 && *v <= hi + 1e-12));
    }
}
