//! Experiment configuration, drivers for the command-line tool and the
//! verification suite. Every driver writes CSV files with a header row and a
//! JSON report into its output directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};
use nalgebra::DMatrix;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checks::{self, CheckResult};
use crate::components::{instantiate_configuration, Archetype, ComponentLibrary, MeshSpec, PumSpace};
use crate::enrichment::{enrich, pad_coefficients, BrrSettings, EnrichmentConfig, EnrichmentTrace, GlobalSampler};
use crate::error::{Error, Result};
use crate::estimator::{
    beta_app, delta_indicator, estimate_c_h, estimate_lipschitz, local_residuals, BrrConstants,
    ErrorReport,
};
use crate::fem::io::write_field;
use crate::fem::assembly::assemble_mass;
use crate::fem::NewtonSettings;
use crate::rom::{assemble_rom, global_h1_gram, solve_hf, solve_rom, RomSystem};
use crate::training::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    Train,
    Enrich,
    Solve,
    Linear,
    Nonlinear,
    Enrichment,
    Verify,
}

/// Top-level experiment file. Every section has defaults; unknown keys are
/// rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Optional guard: the command must match when set.
    pub study: Option<StudyKind>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Coarser mesh (4 x 4 elements of degree 2 per subdomain).
    pub fast: bool,
    /// Explicit mesh; overrides `fast`.
    pub mesh: Option<MeshSpec>,
    pub training: TrainingSettings,
    /// Directory with `basis_{co,ed,int}.pumrom`; trained on the fly if unset.
    pub basis_dir: Option<PathBuf>,
    pub solve: SolveConfig,
    pub enrichment: EnrichmentConfig,
    pub linear: LinearStudyConfig,
    pub nonlinear: NonlinearStudyConfig,
    pub enrichment_study: EnrichmentStudyConfig,
    pub verify: VerifyConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            study: None,
            seed: 0,
            out: None,
            fast: false,
            mesh: None,
            training: TrainingSettings::default(),
            basis_dir: None,
            solve: SolveConfig::default(),
            enrichment: EnrichmentConfig::default(),
            linear: LinearStudyConfig::default(),
            nonlinear: NonlinearStudyConfig::default(),
            enrichment_study: EnrichmentStudyConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.mesh_spec().validate().map_err(|e| Error::Config(e.to_string()))?;
        self.training.sampler.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.training.newton.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.training.n > self.training.n_train {
            return Err(Error::Config("training.n must not exceed training.n_train".into()));
        }
        self.enrichment.validate()?;
        self.linear.validate()?;
        self.nonlinear.validate()?;
        self.enrichment_study.validate()?;
        Ok(())
    }

    /// Fails when `study` is set and differs from the command.
    pub fn expect(&self, kind: StudyKind) -> Result<()> {
        match self.study {
            Some(s) if s != kind => Err(Error::Config(format!("config is for {s:?}, command is {kind:?}"))),
            _ => Ok(()),
        }
    }

    pub fn mesh_spec(&self) -> MeshSpec {
        self.mesh.unwrap_or(if self.fast { MeshSpec::fast() } else { MeshSpec::standard() })
    }

    pub fn library(&self) -> Result<Arc<ComponentLibrary>> {
        Ok(Arc::new(ComponentLibrary::new(self.mesh_spec())?))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

/// Settings of a single global reduced solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveConfig {
    pub n_dd: usize,
    /// One-based source subdomain (0: none); drawn when unset.
    pub i_star: Option<usize>,
    /// `(mu1, mu2)` per subdomain; drawn when unset.
    pub params: Option<Vec<[f64; 2]>>,
    /// Modes per archetype; all available when unset.
    pub n: Option<usize>,
    /// Also solve the HF problem and report the error.
    pub compare_hf: bool,
    /// BRR estimate using `extra` further modes of the stored bases.
    pub brr: Option<BrrSettings>,
    pub newton: NewtonSettings,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            n_dd: 4,
            i_star: None,
            params: None,
            n: None,
            compare_hf: true,
            brr: None,
            newton: NewtonSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearStudyConfig {
    /// Elements per direction on `U` (multiple of 3).
    pub elems: usize,
    pub degree: usize,
    pub n_train: usize,
    pub n_max: usize,
    pub n_test: usize,
    /// Independent training sets per sampler.
    pub repetitions: usize,
    pub n_f: usize,
    pub alpha: f64,
    /// Parameters for the TE+POD baseline (0 skips it).
    pub te_pod_train: usize,
    /// Repetitions of the error-indicator ratio `E(10) / E(100)` (0 skips).
    pub effectivity_runs: usize,
    pub effectivity_n: usize,
    pub effectivity_small: usize,
    pub effectivity_large: usize,
}

impl Default for LinearStudyConfig {
    fn default() -> Self {
        Self {
            elems: 9,
            degree: 3,
            n_train: 50,
            n_max: 40,
            n_test: 100,
            repetitions: 10,
            n_f: 20,
            alpha: 1.0,
            te_pod_train: 10,
            effectivity_runs: 100,
            effectivity_n: 10,
            effectivity_small: 10,
            effectivity_large: 100,
        }
    }
}

impl LinearStudyConfig {
    fn validate(&self) -> Result<()> {
        if self.elems == 0 || self.elems % 3 != 0 || self.degree == 0 {
            return Err(Error::Config("linear.elems must be a positive multiple of 3, degree >= 1".into()));
        }
        if self.n_max > self.n_train || self.n_test == 0 {
            return Err(Error::Config("linear: need n_max <= n_train and n_test > 0".into()));
        }
        if self.effectivity_runs > 0
            && (self.effectivity_small == 0
                || self.effectivity_small > self.effectivity_large
                || self.effectivity_n > self.n_train)
        {
            return Err(Error::Config("linear: invalid effectivity sizes".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NonlinearStudyConfig {
    pub n_dd: usize,
    pub n_test: usize,
    pub n_train: usize,
    pub n_max: usize,
    /// Smoothness exponents of the smooth sampler.
    pub alphas: Vec<f64>,
    pub u_max: f64,
    pub gaussian: bool,
    /// Independent training repetitions (seeds `seed + r`).
    pub repetitions: usize,
    /// Sizes for the global Galerkin/projection comparison (empty skips it;
    /// needs all archetypes).
    pub global_n: Vec<usize>,
    pub archetypes: Vec<Archetype>,
}

impl Default for NonlinearStudyConfig {
    fn default() -> Self {
        Self {
            n_dd: 4,
            n_test: 5,
            n_train: 50,
            n_max: 25,
            alphas: vec![0.5, 1.0, 2.0],
            u_max: 0.5,
            gaussian: true,
            repetitions: 1,
            global_n: (1..=25).collect(),
            archetypes: Archetype::ALL.to_vec(),
        }
    }
}

impl NonlinearStudyConfig {
    fn validate(&self) -> Result<()> {
        if self.n_dd < 2 || self.n_test == 0 || self.repetitions == 0 {
            return Err(Error::Config("nonlinear: need n_dd >= 2, n_test >= 1, repetitions >= 1".into()));
        }
        if self.n_max > self.n_train {
            return Err(Error::Config("nonlinear: n_max must not exceed n_train".into()));
        }
        if self.alphas.is_empty() && !self.gaussian {
            return Err(Error::Config("nonlinear: no sampler selected".into()));
        }
        if self.archetypes.is_empty() {
            return Err(Error::Config("nonlinear: no archetype selected".into()));
        }
        if self.global_n.iter().any(|n| *n == 0 || *n > self.n_max) {
            return Err(Error::Config("nonlinear: global_n entries must lie in 1..=n_max".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnrichmentStudyConfig {
    pub n_train_loc: usize,
    pub n_loc: usize,
    pub samplers: Vec<SamplerKind>,
    pub n_test: usize,
    /// Test configurations; the enrichment sampler when unset.
    pub test_sampler: Option<GlobalSampler>,
}

impl Default for EnrichmentStudyConfig {
    fn default() -> Self {
        Self {
            n_train_loc: 30,
            n_loc: 20,
            samplers: vec![SamplerKind::Smooth, SamplerKind::Gaussian],
            n_test: 20,
            test_sampler: None,
        }
    }
}

impl EnrichmentStudyConfig {
    fn validate(&self) -> Result<()> {
        if self.n_loc == 0 || self.n_loc > self.n_train_loc || self.n_test == 0 || self.samplers.is_empty() {
            return Err(Error::Config("enrichment_study: need 0 < n_loc <= n_train_loc, n_test > 0, a sampler".into()));
        }
        if let Some(s) = &self.test_sampler {
            s.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Multiply `C^r` by `fault_scale` in the bound checks.
    pub fault_injection: bool,
    pub fault_scale: f64,
    pub bound_states: usize,
    pub approximation_trials: usize,
    pub chi2_samples: usize,
    pub enrichment_steps: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            fault_injection: false,
            fault_scale: 0.5,
            bound_states: 12,
            approximation_trials: 5,
            chi2_samples: 2000,
            enrichment_steps: 15,
        }
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Serializes rows with a header derived from the field names.
pub fn write_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn prepare(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

/// Median of the finite values (NaN when none).
pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Linear-interpolation quantile of the finite values.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|a, b| v[*a].total_cmp(&v[*b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn basis_path(dir: &Path, a: Archetype) -> PathBuf {
    dir.join(format!("basis_{}.pumrom", a.label()))
}

pub fn save_bases(dir: &Path, bases: &[ReducedBasis]) -> Result<()> {
    prepare(dir)?;
    for b in bases {
        b.save(basis_path(dir, b.archetype))?;
    }
    Ok(())
}

pub fn load_bases(dir: &Path, lib: &ComponentLibrary) -> Result<Vec<ReducedBasis>> {
    Archetype::ALL
        .iter()
        .map(|a| {
            let b = ReducedBasis::load(basis_path(dir, *a))?;
            if b.archetype != *a || b.modes.nrows() != lib.get(*a).ndofs() {
                return Err(Error::Config(format!(
                    "basis file for {a} does not match the mesh ({} rows, expected {})",
                    b.modes.nrows(),
                    lib.get(*a).ndofs()
                )));
            }
            Ok(b)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub archetype: Archetype,
    pub n: usize,
    pub n_train: usize,
    pub failures: usize,
    pub rank_deficient: bool,
    pub eigenvalues: Vec<f64>,
    pub seconds: f64,
}

/// Localized training for every archetype.
pub fn train_all(
    lib: &ComponentLibrary,
    settings: &TrainingSettings,
    seed: u64,
) -> Result<(Vec<ReducedBasis>, Vec<TrainSummary>)> {
    let mut bases = Vec::new();
    let mut summary = Vec::new();
    for a in Archetype::ALL {
        let start = Instant::now();
        let mut rng = rng_for(seed, 1 + a.index() as u64);
        let out = localized_training(lib.get(a), settings, &mut rng)?;
        info!("trained {a}: {} modes, {} failures", out.basis.n(), out.failures);
        summary.push(TrainSummary {
            archetype: a,
            n: out.basis.n(),
            n_train: settings.n_train,
            failures: out.failures,
            rank_deficient: out.basis.rank_deficient,
            eigenvalues: out.basis.eigenvalues.iter().take(settings.n + 5).copied().collect(),
            seconds: start.elapsed().as_secs_f64(),
        });
        bases.push(out.basis);
    }
    Ok((bases, summary))
}

/// `pum-rom train`
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<Vec<TrainSummary>> {
    let out = cfg.out_dir();
    prepare(&out)?;
    let lib = cfg.library()?;
    let (bases, summary) = train_all(&lib, &cfg.training, cfg.seed)?;
    save_bases(&out, &bases)?;
    write_json(out.join("train_report.json"), &summary)?;
    Ok(summary)
}

fn bases_for(cfg: &ExperimentConfig, lib: &ComponentLibrary) -> Result<Vec<ReducedBasis>> {
    match &cfg.basis_dir {
        Some(d) => load_bases(d, lib),
        None => Ok(train_all(lib, &cfg.training, cfg.seed)?.0),
    }
}

fn modes(bases: &[ReducedBasis]) -> Vec<DMatrix<f64>> {
    bases.iter().map(|b| b.modes.clone()).collect()
}

fn truncate(bases: &[DMatrix<f64>], sizes: [usize; 3]) -> Vec<DMatrix<f64>> {
    bases
        .iter()
        .zip(sizes)
        .map(|(m, n)| m.columns(0, n.min(m.ncols())).into_owned())
        .collect()
}

/// `pum-rom enrich`
pub fn cmd_enrich(cfg: &ExperimentConfig) -> Result<EnrichmentTrace> {
    let out = cfg.out_dir();
    prepare(&out)?;
    let lib = cfg.library()?;
    let initial = bases_for(cfg, &lib)?;
    let mut rng = rng_for(cfg.seed, 10);
    let (z, trace) = enrich(&lib, modes(&initial), &cfg.enrichment, &mut rng)?;
    let bases: Vec<ReducedBasis> = Archetype::ALL
        .iter()
        .map(|a| ReducedBasis {
            archetype: *a,
            modes: z[a.index()].clone(),
            eigenvalues: Vec::new(),
            rank_deficient: false,
        })
        .collect();
    save_bases(&out, &bases)?;
    trace.write_csv(out.join("enrichment_trace.csv"))?;
    trace.write_json(out.join("enrichment_trace.json"))?;
    Ok(trace)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveOutput {
    pub n_dd: usize,
    pub i_star: usize,
    pub params: Vec<[f64; 2]>,
    pub basis_sizes: [usize; 3],
    pub dim: usize,
    pub newton_iterations: usize,
    pub residual_history: Vec<f64>,
    pub error: ErrorReport,
    pub h1_rel_error: Option<f64>,
    pub rom_seconds: f64,
    pub hf_seconds: Option<f64>,
}

/// `pum-rom solve`
pub fn cmd_solve(cfg: &ExperimentConfig) -> Result<SolveOutput> {
    let out = cfg.out_dir();
    prepare(&out)?;
    let sc = &cfg.solve;
    if sc.n_dd < 2 {
        return Err(Error::Config("solve.n_dd must be at least 2".into()));
    }
    let lib = cfg.library()?;
    let bases = bases_for(cfg, &lib)?;
    let mut rng = rng_for(cfg.seed, 20);
    let nc = sc.n_dd * sc.n_dd;
    let params = match &sc.params {
        Some(p) => p.clone(),
        None => (0..nc).map(|_| sample_box(&mut rng)).collect(),
    };
    let i_star = sc.i_star.unwrap_or_else(|| 1 + (rng.next_u64() % nc as u64) as usize);
    let gcfg = instantiate_configuration(sc.n_dd, params.clone(), i_star).map_err(|e| Error::Config(e.to_string()))?;
    let space = Arc::new(PumSpace::new(gcfg, &lib)?);
    let form = space.cfg.model()?;
    let all = modes(&bases);
    let avail = [all[0].ncols(), all[1].ncols(), all[2].ncols()];
    let n = sc.n.map_or(avail, |n| [n.min(avail[0]), n.min(avail[1]), n.min(avail[2])]);
    let z = truncate(&all, n);
    let start = Instant::now();
    let sys = assemble_rom(space.clone(), lib.clone(), &z)?;
    let (coef, rep) = solve_rom(&sys, &form, &sc.newton, None)?;
    let field = sys.reconstruct(&coef);
    let rom_seconds = start.elapsed().as_secs_f64();
    let res = local_residuals(&space, &lib, &field, &form)?;
    let pou_c = 2f64.sqrt() / lib.get(Archetype::Co).mesh.delta;
    let mut error = ErrorReport::new(res, pou_c, crate::components::OVERLAP_COUNT);
    if let Some(b) = &sc.brr {
        let wider = [n[0] + b.extra, n[1] + b.extra, n[2] + b.extra];
        if (0..3).any(|k| wider[k] > avail[k]) {
            return Err(Error::Config(format!("BRR needs {} extra modes beyond n in the stored bases", b.extra)));
        }
        let big = assemble_rom(space.clone(), lib.clone(), &truncate(&all, wider))?;
        let ub = pad_coefficients(&sys, &big, &coef);
        let beta = beta_app(&big, &form, &ub)?;
        let mut r = rng_for(cfg.seed, 21);
        let c_h = match b.c_h {
            Some(c) => c,
            None => estimate_c_h(&space.disc, &space.dirichlet, b.power_iterations, &mut r)?,
        };
        let lipschitz = match b.lipschitz {
            Some(l) => l,
            None => estimate_lipschitz(&big, &form, &ub, b.lipschitz_samples, b.lipschitz_radius, &mut r)?,
        };
        error = error.with_brr(BrrConstants { beta, c_h, lipschitz })?;
    }
    let (h1_rel_error, hf_seconds) = if sc.compare_hf {
        let t = Instant::now();
        let (exact, _) = solve_hf(&space, &form, &sc.newton)?;
        let secs = t.elapsed().as_secs_f64();
        let g = global_h1_gram(&space);
        write_field(out.join("hf_solution.pumrom"), &exact, &serde_json::json!({"kind": "hf", "n_dd": sc.n_dd}))?;
        (Some(rel_error(&g, &exact, &field)), Some(secs))
    } else {
        (None, None)
    };
    write_field(
        out.join("rom_solution.pumrom"),
        &field,
        &serde_json::json!({"kind": "rom", "n_dd": sc.n_dd, "basis_sizes": n}),
    )?;
    let report = SolveOutput {
        n_dd: sc.n_dd,
        i_star,
        params,
        basis_sizes: n,
        dim: sys.dim(),
        newton_iterations: rep.iterations,
        residual_history: rep.history,
        error,
        h1_rel_error,
        rom_seconds,
        hf_seconds,
    };
    write_json(out.join("solve_report.json"), &report)?;
    Ok(report)
}

fn rel_error(gram: &crate::linalg::SparseMatrix, exact: &[f64], approx: &[f64]) -> f64 {
    let e: Vec<f64> = exact.iter().zip(approx).map(|(a, b)| a - b).collect();
    (gram.quad_form(&e).max(0.0) / gram.quad_form(exact).max(1e-300)).sqrt()
}

// ---------------------------------------------------------------- linear

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearCurveRow {
    pub train: String,
    pub test: String,
    pub rep: usize,
    pub n: usize,
    pub e_max_rel: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearSummaryRow {
    pub train: String,
    pub test: String,
    pub n: usize,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectivityRow {
    pub run: usize,
    pub train: String,
    pub e_small: f64,
    pub e_large: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearReport {
    pub n_in: usize,
    pub ndofs: usize,
    pub summary: Vec<LinearSummaryRow>,
    pub te_pod: Vec<LinearSummaryRow>,
    pub te_pod_solves: usize,
    pub effectivity: Vec<EffectivityRow>,
    /// Fraction of runs with `eta` in `[0.5, 1.5]`, per training sampler.
    pub effectivity_in_band: Vec<(String, f64)>,
    pub seconds: f64,
}

fn label(kind: SamplerKind) -> String {
    match kind {
        SamplerKind::Smooth => "smooth".into(),
        SamplerKind::Gaussian => "gaussian".into(),
    }
}

fn e_max_curve(modes: &DMatrix<f64>, gram: &crate::linalg::SparseMatrix, test: &DMatrix<f64>) -> Result<Vec<f64>> {
    let e = projection_errors(modes, gram, test)?;
    Ok((0..e.ncols()).map(|c| e.column(c).max()).collect())
}

/// Linear transfer study: maximum relative projection errors for smooth and
/// Gaussian training and test sets, the TE+POD baseline and the stability of
/// the probabilistic error indicator.
pub fn study_linear(cfg: &ExperimentConfig) -> Result<LinearReport> {
    let start = Instant::now();
    let lc = &cfg.linear;
    let out = cfg.out_dir();
    prepare(&out)?;
    let setup = LinearSetup::new(lc.elems, lc.degree)?;
    let kinds = [SamplerKind::Smooth, SamplerKind::Gaussian];
    let mut rng = rng_for(cfg.seed, 30);
    let tests: Vec<DMatrix<f64>> = kinds
        .iter()
        .map(|k| linear_snapshots(&setup, *k, lc.n_test, lc.n_f, lc.alpha, &mut rng))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for rep in 0..lc.repetitions {
        for train in kinds {
            let snaps = linear_snapshots(&setup, train, lc.n_train, lc.n_f, lc.alpha, &mut rng)?;
            let p = pod(&snaps, &setup.gram, lc.n_max)?;
            for (test, t) in kinds.iter().zip(&tests) {
                for (n, e) in e_max_curve(&p.modes, &setup.gram, t)?.into_iter().enumerate() {
                    rows.push(LinearCurveRow { train: label(train), test: label(*test), rep, n, e_max_rel: e });
                }
            }
        }
    }
    write_csv(out.join("linear_curves.csv"), &rows)?;
    let mut summary = Vec::new();
    for train in kinds {
        for test in kinds {
            for n in 0..=lc.n_max {
                let v: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.train == label(train) && r.test == label(test) && r.n == n)
                    .map(|r| r.e_max_rel)
                    .collect();
                if v.is_empty() {
                    continue;
                }
                summary.push(LinearSummaryRow {
                    train: label(train),
                    test: label(test),
                    n,
                    median: median(&v),
                    q10: quantile(&v, 0.1),
                    q90: quantile(&v, 0.9),
                });
            }
        }
    }
    write_csv(out.join("linear_summary.csv"), &summary)?;

    let mut te_rows = Vec::new();
    let mut te_pod_solves = 0;
    if lc.te_pod_train > 0 {
        let p_train: Vec<[f64; 4]> = (0..lc.te_pod_train).map(|_| LinearSetup::sample_mu(&mut rng)).collect();
        let te = te_pod_baseline(&setup, &p_train, lc.n_max)?;
        te_pod_solves = te.solves;
        for (test, t) in kinds.iter().zip(&tests) {
            for (n, e) in e_max_curve(&te.modes, &setup.gram, t)?.into_iter().enumerate() {
                te_rows.push(LinearSummaryRow { train: "te_pod".into(), test: label(*test), n, median: e, q10: e, q90: e });
            }
        }
        write_csv(out.join("te_pod.csv"), &te_rows)?;
    }

    let mut eff = Vec::new();
    let mut in_band = Vec::new();
    if lc.effectivity_runs > 0 {
        for train in kinds {
            let mut inside = 0;
            for run in 0..lc.effectivity_runs {
                let mut r = rng_for(cfg.seed.wrapping_add(run as u64), 31 + train as u64);
                let snaps = linear_snapshots(&setup, train, lc.n_train, lc.n_f, lc.alpha, &mut r)?;
                let p = pod(&snaps, &setup.gram, lc.effectivity_n)?;
                let k = p.modes.ncols();
                let mean_error = |count: usize, r: &mut ChaCha8Rng| -> Result<f64> {
                    let test = linear_snapshots(&setup, train, count, lc.n_f, lc.alpha, r)?;
                    Ok(projection_errors(&p.modes, &setup.gram, &test)?.column(k).mean())
                };
                let e_small = mean_error(lc.effectivity_small, &mut r)?;
                let e_large = mean_error(lc.effectivity_large, &mut r)?;
                let eta = e_small / e_large;
                if (0.5..=1.5).contains(&eta) {
                    inside += 1;
                }
                eff.push(EffectivityRow { run, train: label(train), e_small, e_large, eta });
            }
            in_band.push((label(train), inside as f64 / lc.effectivity_runs as f64));
        }
        write_csv(out.join("effectivity.csv"), &eff)?;
    }
    let report = LinearReport {
        n_in: setup.n_in(),
        ndofs: setup.disc.ndofs(),
        summary,
        te_pod: te_rows,
        te_pod_solves,
        effectivity: eff,
        effectivity_in_band: in_band,
        seconds: start.elapsed().as_secs_f64(),
    };
    write_json(out.join("linear_report.json"), &report)?;
    Ok(report)
}

// ------------------------------------------------------------- nonlinear

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalErrorRow {
    pub sampler: String,
    pub rep: usize,
    pub archetype: Archetype,
    pub n: usize,
    pub e_avg_rel: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlobalErrorRow {
    pub n: usize,
    pub proj_h1: f64,
    pub galerkin_h1: f64,
    pub galerkin_l2: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NonlinearReport {
    /// Test snapshot counts (co, ed, int).
    pub dataset_sizes: [usize; 3],
    pub local: Vec<LocalErrorRow>,
    pub global: Vec<GlobalErrorRow>,
    pub training_failures: usize,
    pub seconds: f64,
}

/// Test solutions: global HF solves and their restrictions to every
/// instantiated component, grouped by archetype.
pub struct TestSet {
    pub spaces: Vec<Arc<PumSpace>>,
    pub solutions: Vec<Vec<f64>>,
    pub local: [DMatrix<f64>; 3],
}

pub fn hf_test_set(
    lib: &ComponentLibrary,
    sampler: &GlobalSampler,
    count: usize,
    newton: &NewtonSettings,
    rng: &mut dyn RngCore,
) -> Result<TestSet> {
    let cfgs: Vec<_> = (0..count).map(|_| sampler.sample(rng)).collect::<Result<_>>()?;
    let solved: Vec<(Arc<PumSpace>, Vec<f64>)> = cfgs
        .into_par_iter()
        .enumerate()
        .map(|(k, c)| -> Result<(Arc<PumSpace>, Vec<f64>)> {
            let space = Arc::new(PumSpace::new(c, lib)?);
            let form = space.cfg.model()?;
            let (u, _) = solve_hf(&space, &form, newton).map_err(|e| e.with_context(format!("test configuration {k}")))?;
            Ok((space, u))
        })
        .collect::<Result<_>>()?;
    let mut cols: [Vec<Vec<f64>>; 3] = Default::default();
    for (space, u) in &solved {
        for i in 0..space.n_components() {
            cols[space.cfg.labels[i].index()].push(crate::estimator::gather(space, i, u));
        }
    }
    let local = std::array::from_fn(|k| {
        let nd = lib.get(Archetype::ALL[k]).ndofs();
        DMatrix::from_fn(nd, cols[k].len(), |r, c| cols[k][c][r])
    });
    let (spaces, solutions) = solved.into_iter().unzip();
    Ok(TestSet { spaces, solutions, local })
}

fn avg_curve(modes: &DMatrix<f64>, gram: &crate::linalg::SparseMatrix, test: &DMatrix<f64>) -> Result<Vec<f64>> {
    if test.ncols() == 0 {
        return Ok(Vec::new());
    }
    let e = projection_errors(modes, gram, test)?;
    Ok((0..e.ncols()).map(|c| e.column(c).mean()).collect())
}

/// Nonlinear study: localized projection errors on HF test data for smooth
/// (several alpha) and Gaussian training, the in-sample POD reference, and
/// the global Galerkin vs projection errors of the reduced model.
pub fn study_nonlinear(cfg: &ExperimentConfig) -> Result<NonlinearReport> {
    let start = Instant::now();
    let nc = &cfg.nonlinear;
    let out = cfg.out_dir();
    prepare(&out)?;
    let lib = cfg.library()?;
    let sampler = GlobalSampler { n_dd_min: nc.n_dd, n_dd_max: nc.n_dd };
    let mut rng = rng_for(cfg.seed, 40);
    let test = hf_test_set(&lib, &sampler, nc.n_test, &cfg.training.newton, &mut rng)?;
    let dataset_sizes = [test.local[0].ncols(), test.local[1].ncols(), test.local[2].ncols()];
    info!("test datasets (co, ed, int): {dataset_sizes:?}");

    let mut variants: Vec<(String, SamplerSettings)> = nc
        .alphas
        .iter()
        .map(|a| {
            (
                format!("smooth_a{a}"),
                SamplerSettings { kind: SamplerKind::Smooth, alpha: *a, u_max: nc.u_max, ..cfg.training.sampler },
            )
        })
        .collect();
    if nc.gaussian {
        variants.push((
            "gaussian".into(),
            SamplerSettings { kind: SamplerKind::Gaussian, u_max: nc.u_max, ..cfg.training.sampler },
        ));
    }
    let mut rows = Vec::new();
    let mut failures = 0;
    let mut galerkin_bases: Option<Vec<DMatrix<f64>>> = None;
    let gal_variant = nc
        .alphas
        .iter()
        .position(|a| *a == 1.0)
        .or(if nc.alphas.is_empty() { None } else { Some(0) })
        .unwrap_or(0);
    for rep in 0..nc.repetitions {
        for (vi, (name, sampler)) in variants.iter().enumerate() {
            let settings = TrainingSettings { n_train: nc.n_train, n: nc.n_max, sampler: *sampler, newton: cfg.training.newton };
            let mut bases = Vec::new();
            for a in nc.archetypes.iter().copied() {
                let mut r = rng_for(cfg.seed.wrapping_add(rep as u64), 100 + 10 * vi as u64 + a.index() as u64);
                let t = localized_training(lib.get(a), &settings, &mut r)?;
                failures += t.failures;
                for (n, e) in avg_curve(&t.basis.modes, &lib.get(a).norm_gram, &test.local[a.index()])?
                    .into_iter()
                    .enumerate()
                {
                    rows.push(LocalErrorRow { sampler: name.clone(), rep, archetype: a, n, e_avg_rel: e });
                }
                bases.push(t.basis.modes);
            }
            info!("nonlinear study: trained {name} (rep {rep})");
            if rep == 0 && vi == gal_variant && nc.archetypes == Archetype::ALL {
                galerkin_bases = Some(bases);
            }
        }
    }
    for a in nc.archetypes.iter().copied() {
        let d = &test.local[a.index()];
        if d.ncols() == 0 {
            continue;
        }
        let g = &lib.get(a).norm_gram;
        let p = pod(d, g, nc.n_max.min(d.ncols()))?;
        for (n, e) in avg_curve(&p.modes, g, d)?.into_iter().enumerate() {
            rows.push(LocalErrorRow { sampler: "opt".into(), rep: 0, archetype: a, n, e_avg_rel: e });
        }
    }
    write_csv(out.join("local_errors.csv"), &rows)?;

    let mut global = Vec::new();
    if let Some(bases) = galerkin_bases.filter(|_| !nc.global_n.is_empty()) {
        global = global_errors(&lib, &test, &bases, &nc.global_n, &cfg.training.newton)?;
        write_csv(out.join("global_errors.csv"), &global)?;
    }
    let report = NonlinearReport {
        dataset_sizes,
        local: rows,
        global,
        training_failures: failures,
        seconds: start.elapsed().as_secs_f64(),
    };
    write_json(out.join("nonlinear_report.json"), &report)?;
    Ok(report)
}

/// Average relative H1 projection and Galerkin errors (and Galerkin L2)
/// over the test set for each basis size.
pub fn global_errors(
    lib: &Arc<ComponentLibrary>,
    test: &TestSet,
    bases: &[DMatrix<f64>],
    sizes: &[usize],
    newton: &NewtonSettings,
) -> Result<Vec<GlobalErrorRow>> {
    let per_config: Vec<Vec<(f64, f64, f64)>> = test
        .spaces
        .par_iter()
        .zip(&test.solutions)
        .map(|(space, exact)| -> Result<Vec<(f64, f64, f64)>> {
            let form = space.cfg.model()?;
            let h1 = global_h1_gram(space);
            let mass = assemble_mass(&space.disc);
            let mut prev: Option<(RomSystem, Vec<f64>)> = None;
            let mut out = Vec::new();
            for n in sizes {
                let sys = assemble_rom(space.clone(), lib.clone(), &truncate(bases, [*n; 3]))?;
                let proj = rel_error(&h1, exact, &sys.reconstruct(&sys.project(exact, &h1)?));
                let init = prev.as_ref().map(|(s, u)| pad_coefficients(s, &sys, u));
                let solved = solve_rom(&sys, &form, newton, init.as_deref())
                    .or_else(|_| solve_rom(&sys, &form, newton, None));
                match solved {
                    Ok((coef, _)) => {
                        let f = sys.reconstruct(&coef);
                        out.push((proj, rel_error(&h1, exact, &f), rel_error(&mass, exact, &f)));
                        prev = Some((sys, coef));
                    }
                    Err(e) => {
                        warn!("reduced solve failed at n = {n}: {e}");
                        out.push((proj, f64::NAN, f64::NAN));
                        prev = None;
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(sizes
        .iter()
        .enumerate()
        .map(|(k, n)| {
            let vals: Vec<(f64, f64, f64)> = per_config.iter().map(|v| v[k]).collect();
            let mean = |f: fn(&(f64, f64, f64)) -> f64| vals.iter().map(f).sum::<f64>() / vals.len() as f64;
            GlobalErrorRow {
                n: *n,
                proj_h1: mean(|v| v.0),
                galerkin_h1: mean(|v| v.1),
                galerkin_l2: mean(|v| v.2),
                failures: vals.iter().filter(|v| v.1.is_nan()).count(),
            }
        })
        .collect())
}

// ------------------------------------------------------------ enrichment

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnrichmentErrorRow {
    pub sampler: String,
    pub iteration: usize,
    pub test_id: usize,
    pub n_dd: usize,
    pub n_co: usize,
    pub n_ed: usize,
    pub n_int: usize,
    pub h1_rel_error: f64,
    pub delta: f64,
    pub effectivity: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnrichmentSummaryRow {
    pub sampler: String,
    pub iteration: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnrichmentStudyReport {
    pub summary: Vec<EnrichmentSummaryRow>,
    /// Median error after the last iteration over the initial median.
    pub improvement: Vec<(String, f64)>,
    /// Spearman correlation of Delta and the H1 error per sampler.
    pub spearman: Vec<(String, f64)>,
    pub traces: Vec<(String, EnrichmentTrace)>,
    pub seconds: f64,
}

/// Enrichment study: out-of-sample H1 errors of the reduced model after each
/// enrichment iteration for each initial sampler, with the residual indicator.
pub fn study_enrichment(cfg: &ExperimentConfig) -> Result<EnrichmentStudyReport> {
    let start = Instant::now();
    let es = &cfg.enrichment_study;
    let out = cfg.out_dir();
    prepare(&out)?;
    let lib = cfg.library()?;
    let test_sampler = es.test_sampler.unwrap_or(cfg.enrichment.sampler);
    let mut rng = rng_for(cfg.seed, 50);
    let test = hf_test_set(&lib, &test_sampler, es.n_test, &cfg.training.newton, &mut rng)?;
    let extra = cfg.enrichment.brr.map_or(0, |b| b.extra);
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    for (si, kind) in es.samplers.iter().enumerate() {
        let name = label(*kind);
        let settings = TrainingSettings {
            n_train: es.n_train_loc.max(es.n_loc + extra),
            n: es.n_loc + extra,
            sampler: SamplerSettings { kind: *kind, ..cfg.training.sampler },
            newton: cfg.training.newton,
        };
        let (initial, _) = train_all(&lib, &settings, cfg.seed.wrapping_add(1000 * (si as u64 + 1)))?;
        let init_sizes = [initial[0].n() - extra, initial[1].n() - extra, initial[2].n() - extra];
        let mut r = rng_for(cfg.seed, 60 + si as u64);
        let (z, trace) = enrich(&lib, modes(&initial), &cfg.enrichment, &mut r)?;
        info!("enrichment study: {name} done, {} iterations", trace.iterations.len());
        let mut sizes = vec![init_sizes];
        sizes.extend(trace.iterations.iter().map(|i| i.basis_sizes));
        let per: Vec<Vec<EnrichmentErrorRow>> = test
            .spaces
            .par_iter()
            .zip(&test.solutions)
            .enumerate()
            .map(|(k, (space, exact))| -> Result<Vec<EnrichmentErrorRow>> {
                let form = space.cfg.model()?;
                let h1 = global_h1_gram(space);
                let mut prev: Option<(RomSystem, Vec<f64>)> = None;
                let mut out = Vec::new();
                for (it, s) in sizes.iter().enumerate() {
                    let sys = assemble_rom(space.clone(), lib.clone(), &truncate(&z, *s))?;
                    let init = prev.as_ref().map(|(p, u)| pad_coefficients(p, &sys, u));
                    let (coef, _) = solve_rom(&sys, &form, &cfg.training.newton, init.as_deref())
                        .or_else(|_| solve_rom(&sys, &form, &cfg.training.newton, None))
                        .map_err(|e| e.with_context(format!("test configuration {k}, iteration {it}")))?;
                    let f = sys.reconstruct(&coef);
                    let err = rel_error(&h1, exact, &f);
                    let delta = delta_indicator(&local_residuals(space, &lib, &f, &form)?);
                    out.push(EnrichmentErrorRow {
                        sampler: name.clone(),
                        iteration: it,
                        test_id: k,
                        n_dd: space.cfg.n_dd,
                        n_co: s[0],
                        n_ed: s[1],
                        n_int: s[2],
                        h1_rel_error: err,
                        delta,
                        effectivity: delta / err,
                    });
                    prev = Some((sys, coef));
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        rows.extend(per.into_iter().flatten());
        trace.write_csv(out.join(format!("enrichment_trace_{name}.csv")))?;
        traces.push((name, trace));
    }
    rows.sort_by(|a, b| (a.sampler.as_str(), a.iteration, a.test_id).cmp(&(b.sampler.as_str(), b.iteration, b.test_id)));
    write_csv(out.join("enrichment_errors.csv"), &rows)?;
    let mut summary = Vec::new();
    let mut improvement = Vec::new();
    let mut spear = Vec::new();
    for (name, _) in &traces {
        let its = rows.iter().filter(|r| &r.sampler == name).map(|r| r.iteration).max().unwrap_or(0);
        for it in 0..=its {
            let v: Vec<f64> = rows.iter().filter(|r| &r.sampler == name && r.iteration == it).map(|r| r.h1_rel_error).collect();
            summary.push(EnrichmentSummaryRow {
                sampler: name.clone(),
                iteration: it,
                median: median(&v),
                q25: quantile(&v, 0.25),
                q75: quantile(&v, 0.75),
            });
        }
        let m = |it: usize| summary.iter().find(|s| &s.sampler == name && s.iteration == it).map_or(f64::NAN, |s| s.median);
        improvement.push((name.clone(), m(its) / m(0)));
        let sel: Vec<&EnrichmentErrorRow> = rows.iter().filter(|r| &r.sampler == name).collect();
        let d: Vec<f64> = sel.iter().map(|r| r.delta).collect();
        let e: Vec<f64> = sel.iter().map(|r| r.h1_rel_error).collect();
        spear.push((name.clone(), spearman(&d, &e)));
    }
    write_csv(out.join("enrichment_summary.csv"), &summary)?;
    let report = EnrichmentStudyReport {
        summary,
        improvement,
        spearman: spear,
        traces,
        seconds: start.elapsed().as_secs_f64(),
    };
    write_json(out.join("enrichment_report.json"), &report)?;
    Ok(report)
}

// ---------------------------------------------------------------- verify

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub fault_injection: bool,
    pub fault_scale: f64,
    pub note: Option<String>,
    pub checks: Vec<CheckResult>,
    pub seconds: f64,
}

/// Runs every invariant check at desk scale.
pub fn verify(cfg: &ExperimentConfig) -> Result<VerifyReport> {
    let start = Instant::now();
    let vc = &cfg.verify;
    let lib = cfg.library()?;
    let scale = if vc.fault_injection { vc.fault_scale } else { 1.0 };
    let s = cfg.seed;
    let list: Vec<CheckResult> = vec![
        checks::pou(cfg.mesh_spec(), 4),
        checks::approximation_bound(&lib, 3, vc.approximation_trials, 5, s),
        checks::residual_bound(&lib, vc.bound_states, s + 1, scale),
        // dense eigenproblem over all covectors: coarse mesh keeps it quick
        checks::residual_bound_sharp(&ComponentLibrary::new(MeshSpec::fast())?, scale),
        checks::pou_multiplier(&lib, scale),
        checks::chi_squared(vc.chi2_samples, 20, &[1.0, 2.0], s + 2),
        checks::jacobian_fd(&lib, 3, s + 3),
        checks::galerkin_optimality(&lib, s + 4),
        checks::enrichment_convergence(&lib, 2, vc.enrichment_steps, &[s + 5, s + 6]),
        checks::riesz_homogeneity(&lib, s + 7),
        checks::exact_solution_residual(&lib, s + 8),
        checks::pod_orthonormality(&lib, s + 9),
        checks::sampler_bounds(&lib, 50, s + 10),
        checks::determinism(&lib, s + 11),
        checks::matrix_io(s + 12),
        checks::marking(),
        checks::te_pod_identity(s + 13),
    ];
    let report = VerifyReport {
        passed: list.iter().all(|c| c.passed),
        fault_injection: vc.fault_injection,
        fault_scale: scale,
        note: vc.fault_injection.then(|| {
            "the residual-bound constants carry a large safety margin (measured local multiplier \
             constants 42-57 against C^r = 141.9), so scales above about 0.4 cannot be detected"
                .to_string()
        }),
        checks: list,
        seconds: start.elapsed().as_secs_f64(),
    };
    let out = cfg.out_dir();
    prepare(&out)?;
    write_json(out.join("verify_report.json"), &report)?;
    Ok(report)
}
