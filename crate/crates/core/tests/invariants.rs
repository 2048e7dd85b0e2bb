//! Property-based invariants over randomly drawn parameters.

use nurd_core::analytic::{
    bernoulli_kl, cross_kl, eq5_landscape, gap_posterior, gaussian_kl, rel_perf, LinearRep,
};
use nurd_core::families::sample_binary_gaussian;
use nurd_core::nn::{loss_and_grad, BinaryBatch, MlpModel, MlpSpec, OutputKind};
use nurd_core::reweighting::{fold_assignment, weighted_corr};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cross_kl_is_nonnegative_and_zero_on_the_diagonal(a in -3.0f64..3.0, b in -3.0f64..3.0, s2 in 0.6f64..5.0) {
        let kl = cross_kl(a, b, s2).unwrap();
        prop_assert!(kl >= -1e-12);
        prop_assert!(cross_kl(a, a, s2).unwrap().abs() < 1e-12);
        let d = |t: f64| s2 * (1.0 + t).powi(2) + (1.0 - t).powi(2) + s2;
        prop_assert!((rel_perf(a, b, s2).unwrap() + 0.5 * (d(a) / s2).ln() - kl).abs() < 1e-9);
    }

    #[test]
    fn landscape_is_invariant_to_sign_and_positive_scale(u in -2.0f64..2.0, v in -2.0f64..2.0, c in 0.1f64..10.0, lambda in 0.0f64..30.0) {
        prop_assume!(u.hypot(v) > 1e-3);
        let base = eq5_landscape(LinearRep::new(u, v), lambda);
        prop_assert!((eq5_landscape(LinearRep::new(-u, -v), lambda) - base).abs() < 1e-12);
        prop_assert!((eq5_landscape(LinearRep::new(c * u, c * v), lambda) - base).abs() < 1e-9);
    }

    #[test]
    fn gap_posterior_is_a_probability_table(r in prop::array::uniform4(0.01f64..0.99)) {
        let rho = [[r[0], r[1]], [r[2], r[3]]];
        let f = gap_posterior(&rho).unwrap();
        for p in f.iter().flatten() {
            prop_assert!((0.0..=1.0).contains(p));
        }
        // symmetric rho across labels carries no information
        let flat = gap_posterior(&[[r[0], r[1]], [r[0], r[1]]]).unwrap();
        for p in flat.iter().flatten() {
            prop_assert!((p - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn divergences_are_nonnegative(p in 0.0f64..1.0, q in 0.001f64..0.999, m in -5.0f64..5.0, v1 in 0.01f64..10.0, v2 in 0.01f64..10.0) {
        prop_assert!(bernoulli_kl(p, q) >= -1e-12);
        prop_assert!(gaussian_kl(m, v1, 0.0, v2) >= -1e-12);
        prop_assert!(gaussian_kl(m, v1, m, v1).abs() < 1e-12);
    }

    #[test]
    fn folds_partition_the_rows(n in 10usize..500, k in 2usize..10, seed in any::<u64>()) {
        prop_assume!(n >= k);
        let f = fold_assignment(n, k, seed).unwrap();
        prop_assert_eq!(f.len(), n);
        let counts: Vec<usize> = (0..k).map(|j| f.iter().filter(|&&x| x == j).count()).collect();
        let base = n / k;
        for (j, c) in counts.iter().enumerate() {
            let want = if j == k - 1 { n - base * (k - 1) } else { base };
            prop_assert_eq!(*c, want);
        }
    }

    #[test]
    fn loss_and_gradient_ignore_a_common_weight_scale(seed in 0u64..1000, scale in 0.01f64..100.0) {
        let data = sample_binary_gaussian(0.5, 40, seed).unwrap();
        let model = MlpModel::init(MlpSpec::new(&[2, 8, 1], OutputKind::Logit).unwrap(), seed).unwrap();
        let x = data.covariates();
        let y = data.labels();
        let w: Vec<f64> = (0..40).map(|i| 0.5 + (i % 3) as f64).collect();
        let ws: Vec<f64> = w.iter().map(|v| v * scale).collect();
        let (l1, g1) = loss_and_grad(&model, &BinaryBatch::new(x.as_slice(), &y, &w)).unwrap();
        let (l2, g2) = loss_and_grad(&model, &BinaryBatch::new(x.as_slice(), &y, &ws)).unwrap();
        prop_assert!((l1 - l2).abs() <= 1e-12 * l1.abs().max(1.0));
        for (a, b) in g1.iter().zip(&g2) {
            prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-6));
        }
    }

    #[test]
    fn weighted_corr_is_bounded_and_scale_free(seed in 0u64..1000, scale in 0.1f64..10.0) {
        let data = sample_binary_gaussian(0.5, 200, seed).unwrap();
        let w: Vec<f64> = (0..200).map(|i| 0.2 + (i % 5) as f64).collect();
        let c = weighted_corr(&data.labels(), &data.nuisance_column(), &w);
        prop_assert!((-1.0..=1.0).contains(&c));
        let scaled: Vec<f64> = data.nuisance_column().iter().map(|z| scale * z + 3.0).collect();
        prop_assert!((weighted_corr(&data.labels(), &scaled, &w) - c).abs() < 1e-9);
    }
}
