mod common;

use common::*;
use pumrom::components::*;
use pumrom::enrichment::*;
use pumrom::estimator::EnergyResiduals;
use pumrom::fem::{assemble_jacobian, NewtonSettings};
use pumrom::models::LinearCoercive;
use pumrom::rom::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn marking_examples() {
    assert_eq!(mark_components(&[1.0, 5.0, 3.0], 34.0), vec![1]);
    assert_eq!(mark_components(&[1.0, 5.0, 3.0], 100.0), vec![1, 2, 0]);
    assert_eq!(mark_components(&[2.0; 4], 50.0), vec![0, 1]);
    assert_eq!(mark_components(&[0.0, 1.0], 1.0), vec![1]);
    assert!(mark_components(&[], 50.0).is_empty());
    let labels = [Archetype::Co, Archetype::Ed, Archetype::Co, Archetype::Ed];
    assert_eq!(mark_per_archetype(&[1.0, 2.0, 3.0, 0.5], &labels, 50.0), vec![2, 1]);
}

#[test]
fn local_correction_properties() {
    let (lib, space) = setup(2, 3, 31);
    let form = space.cfg.model().unwrap();
    let settings = NewtonSettings::default();
    let (exact, _) = solve_hf(&space, &form, &settings).unwrap();
    for i in 0..4 {
        let c = local_correction(&space, &lib, i, &exact, &form, &settings).unwrap();
        assert!(c.iter().all(|x| x.abs() < 1e-7), "{i}");
    }

    let lin = LinearCoercive::new(0.7, 0.2, [0.05, 0.15]);
    let sys = assemble_rom(space.clone(), lib.clone(), &random_bases(&lib, 2, 31)).unwrap();
    let (coef, _) = solve_rom(&sys, &lin, &settings, None).unwrap();
    let u_hat = sys.reconstruct(&coef);
    let energy = EnergyResiduals::new(&space, &lib, &lin.bilinear()).unwrap();
    for k in 0..4 {
        let comp = lib.get(space.cfg.labels[k]);
        let c = local_correction(&space, &lib, k, &u_hat, &lin, &settings).unwrap();
        for l in 0..comp.ndofs() {
            if comp.weight[l] == 0.0 {
                assert_eq!(c[l], 0.0);
            }
        }
        let t: Vec<f64> = c.iter().zip(&comp.weight).map(|(x, w)| x * w).collect();
        let zero = vec![0.0; comp.ndofs()];
        let (_, a) = assemble_jacobian(&comp.disc, &lin.bilinear(), &space.cfg.maps[k], &zero).unwrap();
        let r = energy.residual(k, &u_hat, &lin).unwrap();
        assert!((a.quad_form(&t).sqrt() - r).abs() < 1e-8 * r, "{k}");
    }
}

fn small_config() -> EnrichmentConfig {
    EnrichmentConfig {
        n_train_glo: 3,
        n_glo: 2,
        maxit: 2,
        m_r: 100.0,
        sampler: GlobalSampler { n_dd_min: 3, n_dd_max: 4 },
        ..Default::default()
    }
}

#[test]
fn enrichment_grows_orthonormal_bases() {
    let (lib, _) = setup(2, 0, 32);
    let z0 = random_bases(&lib, 3, 32);
    let cfg = small_config();
    let (z, trace) = enrich(&lib, z0.clone(), &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    assert_eq!(trace.iterations.len(), 2);
    for a in Archetype::ALL {
        let k = a.index();
        assert_eq!(z[k].ncols(), 3 + 2 * cfg.n_glo, "{a}");
        let g = lib.get(a).norm_gram.mul_dense(&z[k]);
        let gram = z[k].transpose() * g;
        let err = (gram - nalgebra::DMatrix::identity(z[k].ncols(), z[k].ncols())).abs().max();
        assert!(err < 1e-10, "{a}: {err}");
        // the original modes are kept in front
        assert!((z[k].columns(0, 3) - &z0[k]).abs().max() == 0.0);
    }
    assert_eq!(trace.rows.len(), 6);
    for it in &trace.iterations {
        assert!(it.dataset_sizes.iter().sum::<usize>() <= 3 * 16);
    }
    // the indicator improves on the training set
    assert!(trace.iterations[1].max_delta < trace.iterations[0].max_delta);

    let (z2, trace2) = enrich(&lib, z0.clone(), &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    assert_eq!(z, z2);
    assert_eq!(serde_json::to_string(&trace).unwrap(), serde_json::to_string(&trace2).unwrap());

    let dir = tempfile::tempdir().unwrap();
    trace.write_csv(dir.path().join("t.csv")).unwrap();
    let text = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert!(text.starts_with("iteration,mu_id,n_dd,delta"));
    assert_eq!(text.lines().count(), 7);
}

#[test]
fn infinite_tolerance_stops_after_one_iteration() {
    let (lib, _) = setup(2, 0, 33);
    let cfg = EnrichmentConfig { tol: Some(1e300), ..small_config() };
    let (z, trace) = enrich(&lib, random_bases(&lib, 2, 33), &cfg, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
    assert_eq!(trace.iterations.len(), 1);
    assert!(trace.terminated_early);
    assert!(z.iter().all(|m| m.ncols() == 4));

    let bad = EnrichmentConfig { m_r: 0.0, ..small_config() };
    assert!(enrich(&lib, random_bases(&lib, 2, 33), &bad, &mut ChaCha8Rng::seed_from_u64(6)).is_err());
    let parsed: Result<EnrichmentConfig, _> = serde_json::from_str(r#"{"n_glo": 3, "bogus": 1}"#);
    assert!(parsed.is_err());
    let parsed: EnrichmentConfig = serde_json::from_str(r#"{"n_glo": 3}"#).unwrap();
    assert_eq!((parsed.n_glo, parsed.n_train_glo, parsed.maxit), (3, 50, 3));
}

#[test]
fn brr_termination_keeps_reserve_modes() {
    let (lib, _) = setup(2, 0, 34);
    let cfg = EnrichmentConfig {
        n_train_glo: 2,
        maxit: 1,
        brr: Some(BrrSettings { extra: 2, ..Default::default() }),
        ..small_config()
    };
    let (z, trace) = enrich(&lib, random_bases(&lib, 5, 34), &cfg, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
    assert!(z.iter().all(|m| m.ncols() == 5 + 2));
    assert!(trace.rows.iter().all(|r| r.tau.is_some_and(|t| t > 0.0)));
}

#[test]
fn simplified_linear_enrichment_converges() {
    let (lib, space) = setup(2, 0, 35);
    let model = LinearCoercive::new(0.8, 0.5, [0.07, 0.12]);
    let trace = simplified_enrich_linear(&space, &lib, &model, random_bases(&lib, 1, 35), 12).unwrap();
    assert_eq!(trace.errors.len(), 13);
    for l in 0..12 {
        let (e0, e1, r) = (trace.errors[l], trace.errors[l + 1], trace.residuals[l]);
        assert!(e1 <= e0 * (1.0 + 1e-12));
        assert!(e1 * e1 <= e0 * e0 - r * r + 1e-8 * trace.errors[0].powi(2), "step {l}");
        assert!(trace.errors[l] <= trace.bound[l] * (1.0 + 1e-12));
    }
    assert!(trace.errors[12] < 0.5 * trace.errors[0]);
}
