//! Acceptance suite: one line per criterion with its timing and budget.
//!
//! `PUMROM_ACCEPTANCE=3,7` runs a subset. Results are also written to
//! `target/acceptance/` as CSV/JSON.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use pumrom::checks::{self, CheckResult};
use pumrom::components::{Archetype, ComponentLibrary, MeshSpec};
use pumrom::study::*;
use pumrom::training::SamplerKind;

struct Outcome {
    passed: bool,
    detail: String,
}

impl From<CheckResult> for Outcome {
    fn from(c: CheckResult) -> Self {
        Outcome {
            passed: c.passed,
            detail: format!("worst {:.3e} vs {:.3e}; {}", c.worst, c.threshold, c.detail),
        }
    }
}

fn failed(e: pumrom::Error) -> Outcome {
    Outcome { passed: false, detail: format!("error: {e}") }
}

fn out_dir(name: &str) -> PathBuf {
    let root = std::env::var_os("CARGO_TARGET_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../target"));
    root.join("acceptance").join(name)
}

fn base_config(name: &str) -> ExperimentConfig {
    ExperimentConfig { seed: 2024, out: Some(out_dir(name)), ..Default::default() }
}

fn nonlinear_decay_and_optimality() -> Outcome {
    let mut cfg = base_config("c8_nonlinear");
    cfg.nonlinear = NonlinearStudyConfig {
        n_dd: 4,
        n_test: 5,
        n_train: 50,
        n_max: 25,
        alphas: vec![1.0],
        gaussian: false,
        repetitions: 1,
        global_n: (1..=25).collect(),
        ..Default::default()
    };
    let r = match study_nonlinear(&cfg) {
        Ok(r) => r,
        Err(e) => return failed(e),
    };
    let e = |n: usize| {
        r.local
            .iter()
            .find(|l| l.sampler == "smooth_a1" && l.archetype == Archetype::Int && l.n == n)
            .map_or(f64::NAN, |l| l.e_avg_rel)
    };
    let decay = e(1) / e(25);
    let worst = r.global.iter().map(|g| g.galerkin_h1 / g.proj_h1).fold(0.0, f64::max);
    let solved = r.global.iter().all(|g| g.failures == 0) && r.global.len() == 25;
    Outcome {
        passed: decay >= 100.0 && worst <= 3.0 && solved,
        detail: format!(
            "int E_avg,rel n=1 {:.3e}, n=25 {:.3e} (ratio {decay:.1}); max Galerkin/projection H1 {worst:.3}",
            e(1),
            e(25)
        ),
    }
}

fn sampler_comparison() -> Outcome {
    let mut cfg = base_config("c9_samplers");
    cfg.nonlinear = NonlinearStudyConfig {
        n_dd: 4,
        n_test: 5,
        n_train: 50,
        n_max: 25,
        alphas: vec![1.0],
        gaussian: true,
        repetitions: 5,
        global_n: Vec::new(),
        archetypes: vec![Archetype::Co, Archetype::Ed],
        ..Default::default()
    };
    let r = match study_nonlinear(&cfg) {
        Ok(r) => r,
        Err(e) => return failed(e),
    };
    let med = |s: &str, a: Archetype, n: usize| {
        let v: Vec<f64> = r
            .local
            .iter()
            .filter(|l| l.sampler == s && l.archetype == a && l.n == n)
            .map(|l| l.e_avg_rel)
            .collect();
        median(&v)
    };
    let mut passed = true;
    let mut parts = Vec::new();
    for a in [Archetype::Co, Archetype::Ed] {
        let wins = (1..=25).filter(|n| med("smooth_a1", a, *n) < med("gaussian", a, *n)).count();
        passed &= wins == 25;
        parts.push(format!(
            "{a}: smooth wins {wins}/25, n=10 {:.2e} vs {:.2e}, n=25 {:.2e} vs {:.2e}",
            med("smooth_a1", a, 10),
            med("gaussian", a, 10),
            med("smooth_a1", a, 25),
            med("gaussian", a, 25)
        ));
    }
    Outcome { passed, detail: parts.join("; ") }
}

fn enrichment_study() -> Outcome {
    let mut cfg = base_config("c10_enrichment");
    cfg.enrichment.n_train_glo = 10;
    cfg.enrichment.n_glo = 5;
    cfg.enrichment.maxit = 3;
    cfg.enrichment_study = EnrichmentStudyConfig {
        n_train_loc: 30,
        n_loc: 20,
        samplers: vec![SamplerKind::Smooth, SamplerKind::Gaussian],
        n_test: 20,
        test_sampler: None,
    };
    let r = match study_enrichment(&cfg) {
        Ok(r) => r,
        Err(e) => return failed(e),
    };
    let improved = r.improvement.iter().all(|(_, q)| *q <= 0.5);
    let rho = r.spearman.iter().find(|(s, _)| s == "smooth").map_or(f64::NAN, |x| x.1);
    Outcome {
        passed: improved && rho >= 0.8,
        detail: format!("median it3/it0 {:?}; Spearman(Delta, E_rel) {:?}", r.improvement, r.spearman),
    }
}

fn indicator_stability() -> Outcome {
    let mut cfg = base_config("c11_effectivity");
    cfg.linear = LinearStudyConfig {
        repetitions: 0,
        te_pod_train: 0,
        effectivity_runs: 100,
        effectivity_n: 10,
        effectivity_small: 10,
        effectivity_large: 100,
        ..Default::default()
    };
    let r = match study_linear(&cfg) {
        Ok(r) => r,
        Err(e) => return failed(e),
    };
    let passed = r.effectivity_in_band.len() == 2 && r.effectivity_in_band.iter().all(|(_, f)| *f >= 0.9);
    Outcome { passed, detail: format!("fraction of eta in [0.5, 1.5]: {:?}", r.effectivity_in_band) }
}

fn main() -> ExitCode {
    let selected: Option<Vec<usize>> = std::env::var("PUMROM_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let lib = Arc::new(ComponentLibrary::new(MeshSpec::standard()).expect("standard mesh"));
    let seeds: Vec<u64> = (1..=5).collect();
    type Criterion<'a> = (usize, &'a str, f64, Box<dyn Fn() -> Outcome + 'a>);
    let criteria: Vec<Criterion> = vec![
        (1, "PoU exactness", 5.0, Box::new(|| checks::pou(MeshSpec::standard(), 4).into())),
        (2, "global approximation bounds", 60.0, Box::new(|| checks::approximation_bound(&lib, 4, 20, 5, 11).into())),
        (3, "global residual bound", 120.0, Box::new(|| checks::residual_bound(&lib, 50, 12, 1.0).into())),
        (4, "chi-squared law of the smooth sampler", 30.0, Box::new(|| checks::chi_squared(2000, 20, &[1.0, 2.0], 13).into())),
        (5, "reduced Jacobian vs finite differences", 60.0, Box::new(|| checks::jacobian_fd(&lib, 3, 14).into())),
        (6, "Galerkin optimality (linear coercive)", 60.0, Box::new(|| checks::galerkin_optimality(&lib, 15).into())),
        (7, "exponential convergence of linear enrichment", 300.0, Box::new(|| {
            // N_dd = 4 subdomains (2 x 2), and also 4 x 4
            let a: Outcome = checks::enrichment_convergence(&lib, 2, 30, &seeds).into();
            let b: Outcome = checks::enrichment_convergence(&lib, 4, 30, &seeds).into();
            Outcome { passed: a.passed && b.passed, detail: format!("{} | {}", a.detail, b.detail) }
        })),
        (8, "nonlinear local decay and Galerkin optimality", 1200.0, Box::new(nonlinear_decay_and_optimality)),
        (9, "smooth vs Gaussian sampling", 1800.0, Box::new(sampler_comparison)),
        (10, "adaptive enrichment", 1800.0, Box::new(enrichment_study)),
        (11, "error-indicator stability", 600.0, Box::new(indicator_stability)),
    ];
    let mut all = true;
    let mut summary = Vec::new();
    for (id, name, budget, f) in &criteria {
        if selected.as_ref().is_some_and(|s| !s.contains(id)) {
            continue;
        }
        let start = Instant::now();
        let o = f();
        let secs = start.elapsed().as_secs_f64();
        let ok = o.passed && secs < *budget;
        all &= ok;
        println!(
            "{} criterion {id:>2}: {name} ({secs:.1} s, budget {budget:.0} s){} -- {}",
            if ok { "PASS" } else { "FAIL" },
            if secs >= *budget { " [over budget]" } else { "" },
            o.detail
        );
        summary.push(serde_json::json!({
            "criterion": id, "name": name, "passed": ok, "seconds": secs, "budget_s": budget, "detail": o.detail
        }));
    }
    let _ = std::fs::create_dir_all(out_dir(""));
    let _ = std::fs::write(
        out_dir("acceptance.json"),
        serde_json::to_string_pretty(&summary).unwrap_or_default(),
    );
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
