use nalgebra::DMatrix;
use proptest::prelude::*;
use pumrom::components::MeshSpec;
use pumrom::enrichment::mark_components;
use pumrom::estimator::{brr_estimator, c_r, global_residual_bound, BrrConstants};
use pumrom::fem::dual_norm;
use pumrom::fem::io::{read_matrix, write_matrix};
use pumrom::linalg::SparseMatrix;
use pumrom::models::{kappa, P_HAT};
use pumrom::study::{quantile, spearman};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kappa_bounded_below_on_unit_interval(
        u in 0.0f64..=1.0,
        mu1 in P_HAT[0][0]..=P_HAT[0][1],
        mu2 in P_HAT[1][0]..=P_HAT[1][1],
    ) {
        let (k, dk) = kappa(u, mu1, mu2).unwrap();
        prop_assert!(k >= mu1 - 1e-15);
        // derivative consistent with a central difference
        let e = 1e-6;
        let fd = (kappa(u + e, mu1, mu2).unwrap().0 - kappa(u - e, mu1, mu2).unwrap().0) / (2.0 * e);
        prop_assert!((fd - dk).abs() <= 1e-5 * (1.0 + dk.abs()));
    }

    #[test]
    fn c_r_is_monotone_and_at_least_sqrt2(a in 0.0f64..1e4, b in 0.0f64..1e4) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(c_r(lo) <= c_r(hi));
        prop_assert!(c_r(lo) >= 2f64.sqrt());
    }

    #[test]
    fn residual_bound_is_homogeneous(r in prop::collection::vec(0.0f64..10.0, 1..20), s in 0.0f64..100.0) {
        let c = vec![141.42; r.len()];
        let scaled: Vec<f64> = r.iter().map(|x| x * s).collect();
        let a = global_residual_bound(&scaled, &c, 4);
        let b = s * global_residual_bound(&r, &c, 4);
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b));
    }

    #[test]
    fn brr_delta_brackets_the_linearized_bound(
        bound in 1e-8f64..1.0,
        beta in 0.05f64..2.0,
        c_h in 0.1f64..10.0,
        lip in 0.1f64..10.0,
    ) {
        let e = brr_estimator(bound, &BrrConstants { beta, c_h, lipschitz: lip }).unwrap();
        prop_assert!((e.tau - 2.0 * lip * c_h * bound / beta.powi(2)).abs() <= 1e-12 * (1.0 + e.tau));
        match e.delta {
            Some(d) => {
                prop_assert!(e.tau < 1.0);
                prop_assert!(d >= bound / beta * (1.0 - 1e-9) && d <= 2.0 * bound / beta * (1.0 + 1e-9));
            }
            None => prop_assert!(e.tau >= 1.0),
        }
    }

    #[test]
    fn marking_selects_the_largest(r in prop::collection::vec(0.0f64..1.0, 1..40), m_r in 0.0f64..=100.0) {
        let marked = mark_components(&r, m_r);
        let n = r.len();
        let expect = ((m_r * n as f64 / 100.0).round() as usize).clamp(1, n);
        prop_assert_eq!(marked.len(), expect);
        let threshold = marked.iter().map(|i| r[*i]).fold(f64::INFINITY, f64::min);
        for i in 0..n {
            if !marked.contains(&i) {
                prop_assert!(r[i] <= threshold);
            }
        }
    }

    #[test]
    fn dual_norm_is_absolutely_homogeneous(
        f in prop::collection::vec(-1.0f64..1.0, 4),
        lambda in -5.0f64..5.0,
        d in prop::collection::vec(0.5f64..2.0, 4),
    ) {
        let g = SparseMatrix::from_triplets(4, 4, &[
            (0, 0, d[0] + 1.0), (1, 1, d[1] + 1.0), (2, 2, d[2] + 1.0), (3, 3, d[3] + 1.0),
            (0, 1, 0.5), (1, 0, 0.5), (2, 3, -0.3), (3, 2, -0.3),
        ]);
        let mask = vec![true, true, false, true];
        let a = dual_norm(&f, &g, &mask).unwrap();
        let scaled: Vec<f64> = f.iter().map(|x| lambda * x).collect();
        let b = dual_norm(&scaled, &g, &mask).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((b - lambda.abs() * a).abs() <= 1e-12 * (1.0 + b));
    }

    #[test]
    fn spearman_is_rank_invariant(x in prop::collection::vec(-1.0f64..1.0, 3..30)) {
        let y: Vec<f64> = x.iter().map(|v| v.exp() * 3.0 + 1.0).collect();
        let z: Vec<f64> = x.iter().map(|v| -v.powi(3)).collect();
        let distinct = x.iter().enumerate().all(|(i, a)| x[..i].iter().all(|b| b != a));
        prop_assume!(distinct);
        prop_assert!((spearman(&x, &y) - 1.0).abs() < 1e-12);
        prop_assert!((spearman(&x, &z) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantiles_are_monotone(v in prop::collection::vec(-10.0f64..10.0, 1..30), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(quantile(&v, lo) <= quantile(&v, hi));
    }

    #[test]
    fn matrix_file_roundtrip(rows in 0usize..6, cols in 0usize..6, seed in any::<u64>()) {
        let m = DMatrix::from_fn(rows, cols, |i, j| ((seed ^ (i * 31 + j) as u64) as f64).sin() * 1e3);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.pumrom");
        write_matrix(&p, &m).unwrap();
        prop_assert_eq!(read_matrix(&p).unwrap(), m);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn partition_of_unity_holds_for_any_layout(n_dd in 2usize..6) {
        let c = pumrom::checks::pou(MeshSpec::fast(), n_dd);
        prop_assert!(c.passed, "{}", c.detail);
    }
}
