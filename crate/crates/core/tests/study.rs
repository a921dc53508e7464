use pumrom::enrichment::GlobalSampler;
use pumrom::study::*;
use pumrom::training::SamplerKind;

fn small(dir: &std::path::Path) -> ExperimentConfig {
    let mut c = ExperimentConfig { fast: true, out: Some(dir.to_path_buf()), ..Default::default() };
    c.training.n_train = 12;
    c.training.n = 6;
    c
}

#[test]
fn config_rejects_unknown_keys_and_bad_values() {
    assert!(ExperimentConfig::from_json(r#"{"seed": 1, "fast": true}"#).is_ok());
    assert!(matches!(ExperimentConfig::from_json(r#"{"sed": 1}"#), Err(pumrom::Error::Config(_))));
    assert!(matches!(
        ExperimentConfig::from_json(r#"{"linear": {"elems": 10}}"#),
        Err(pumrom::Error::Config(_))
    ));
    let c = ExperimentConfig::from_json(r#"{"study": "verify"}"#).unwrap();
    assert!(c.expect(StudyKind::Verify).is_ok());
    assert!(c.expect(StudyKind::Train).is_err());
}

#[test]
fn spearman_and_quantiles() {
    assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 30.0, 40.0]) - 1.0).abs() < 1e-12);
    assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
    // ties: x ranks 1.5 1.5 3, y ranks 1 2 3
    let s = spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]);
    assert!((s - 0.8660254037844386).abs() < 1e-12);
    assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    assert_eq!(quantile(&[0.0, 10.0], 0.25), 2.5);
    assert!(median(&[]).is_nan());
}

#[test]
fn train_then_solve_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let s = cmd_train(&cfg).unwrap();
    assert_eq!(s.len(), 3);
    for a in ["co", "ed", "int"] {
        assert!(dir.path().join(format!("basis_{a}.pumrom")).exists());
        assert!(dir.path().join(format!("basis_{a}.pumrom.json")).exists());
    }
    let out2 = tempfile::tempdir().unwrap();
    let mut solve = small(out2.path());
    solve.basis_dir = Some(dir.path().to_path_buf());
    solve.solve.n_dd = 3;
    solve.solve.i_star = Some(5);
    let r = cmd_solve(&solve).unwrap();
    assert_eq!(r.params.len(), 9);
    assert_eq!(r.basis_sizes, [6, 6, 6]);
    let e = r.h1_rel_error.unwrap();
    assert!(e < 0.5, "relative error {e}");
    assert!(r.error.bound >= 0.0);
    assert!(out2.path().join("solve_report.json").exists());

    // BRR needs extra modes beyond n
    solve.solve.n = Some(4);
    solve.solve.brr = Some(Default::default());
    assert!(matches!(cmd_solve(&solve), Err(pumrom::Error::Config(_))));
    solve.solve.brr = Some(pumrom::enrichment::BrrSettings { extra: 2, ..Default::default() });
    let r = cmd_solve(&solve).unwrap();
    assert!(r.error.brr.is_some());
}

#[test]
fn linear_study_small() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.linear = LinearStudyConfig {
        elems: 6,
        degree: 2,
        n_train: 12,
        n_max: 8,
        n_test: 10,
        repetitions: 2,
        te_pod_train: 3,
        effectivity_runs: 3,
        effectivity_n: 4,
        effectivity_small: 5,
        effectivity_large: 20,
        ..Default::default()
    };
    let r = study_linear(&cfg).unwrap();
    assert_eq!(r.summary.len(), 4 * 9);
    for s in &r.summary {
        assert!(s.q10 <= s.median + 1e-15 && s.median <= s.q90 + 1e-15);
        if s.n == 0 {
            assert!((s.median - 1.0).abs() < 1e-9);
        }
    }
    assert_eq!(r.effectivity.len(), 6);
    for f in ["linear_curves.csv", "linear_summary.csv", "te_pod.csv", "effectivity.csv", "linear_report.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let text = std::fs::read_to_string(dir.path().join("linear_curves.csv")).unwrap();
    assert!(text.starts_with("train,test,rep,n,e_max_rel"));
}

#[test]
fn nonlinear_study_small() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.nonlinear = NonlinearStudyConfig {
        n_dd: 3,
        n_test: 2,
        n_train: 10,
        n_max: 5,
        alphas: vec![1.0],
        global_n: vec![1, 3, 5],
        ..Default::default()
    };
    let r = study_nonlinear(&cfg).unwrap();
    assert_eq!(r.dataset_sizes, [8, 8, 2]);
    assert_eq!(r.global.len(), 3);
    for g in &r.global {
        assert!(g.proj_h1 <= g.galerkin_h1 * (1.0 + 1e-8), "{g:?}");
    }
    assert!(r.local.iter().any(|l| l.sampler == "opt"));
    assert!(dir.path().join("global_errors.csv").exists());
}

#[test]
fn enrichment_study_small() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.enrichment.sampler = GlobalSampler { n_dd_min: 3, n_dd_max: 3 };
    cfg.enrichment.n_train_glo = 3;
    cfg.enrichment.n_glo = 2;
    cfg.enrichment.maxit = 2;
    cfg.enrichment.m_r = 50.0;
    cfg.enrichment_study =
        EnrichmentStudyConfig { n_train_loc: 8, n_loc: 3, samplers: vec![SamplerKind::Smooth], n_test: 2, test_sampler: None };
    let r = study_enrichment(&cfg).unwrap();
    assert_eq!(r.summary.len(), 3);
    assert!(r.improvement[0].1.is_finite());
    assert!(r.spearman[0].1.abs() <= 1.0 + 1e-12);
    assert!(dir.path().join("enrichment_errors.csv").exists());
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        ExperimentConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        n += 1;
    }
    assert!(n >= 7);
}
