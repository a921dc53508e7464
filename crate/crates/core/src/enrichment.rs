//! Adaptive enrichment of the archetype bases from global reduced solves,
//! and the simplified variant for symmetric coercive linear problems.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use log::{info, warn};
use nalgebra::DMatrix;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::components::{instantiate_configuration, Archetype, ComponentLibrary, GlobalConfiguration, PumSpace};
use crate::error::{Error, Result};
use crate::estimator::{
    beta_app, brr_estimator, c_r, delta_indicator, estimate_c_h, estimate_lipschitz, global_residual_bound,
    local_residuals, BrrConstants, EnergyResiduals,
};
use crate::fem::{newton, FieldProblem, NewtonSettings, WeakForm};
use crate::linalg::orthonormalize_against;
use crate::models::LinearCoercive;
use crate::rom::{assemble_rom, solve_hf, solve_rom, RomSystem};
use crate::training::{pod, sample_box};

/// `u_i = T^(i)(u_hat) / phi_i` on the reference mesh of component `i`,
/// zero where the weight vanishes. The correction solves
/// `G(u_hat + T, v) = 0` for all `v` in `X_{i,0}`, starting from `T = 0`.
pub fn local_correction(
    space: &PumSpace,
    lib: &ComponentLibrary,
    i: usize,
    u_hat: &[f64],
    form: &dyn WeakForm,
    settings: &NewtonSettings,
) -> Result<Vec<f64>> {
    let comp = lib.get(space.cfg.labels[i]);
    let base = crate::estimator::gather(space, i, u_hat);
    let prob = FieldProblem {
        disc: &comp.disc,
        form,
        map: space.cfg.maps[i],
        free: comp.interior.clone(),
    };
    let (w, _) = newton(&prob, base.clone(), settings).map_err(|e| e.with_context(format!("local correction on component {i}")))?;
    Ok(divide_by_weight(&comp.weight, &w.iter().zip(&base).map(|(a, b)| a - b).collect::<Vec<_>>()))
}

fn divide_by_weight(weight: &[f64], t: &[f64]) -> Vec<f64> {
    weight.iter().zip(t).map(|(p, x)| if *p > 0.0 { x / p } else { 0.0 }).collect()
}

fn mark_count(n: usize, m_r: f64) -> usize {
    if n == 0 {
        return 0;
    }
    ((m_r * n as f64 / 100.0).round() as usize).clamp(1, n)
}

/// Indices of the `m_r` percent largest residuals, descending; ties go to
/// the lower index.
pub fn mark_components(residuals: &[f64], m_r: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..residuals.len()).collect();
    order.sort_by(|a, b| residuals[*b].total_cmp(&residuals[*a]).then(a.cmp(b)));
    order.truncate(mark_count(residuals.len(), m_r));
    order
}

/// Marking within each archetype separately.
pub fn mark_per_archetype(residuals: &[f64], labels: &[Archetype], m_r: f64) -> Vec<usize> {
    let mut out = Vec::new();
    for a in Archetype::ALL {
        let idx: Vec<usize> = (0..residuals.len()).filter(|i| labels[*i] == a).collect();
        let sub: Vec<f64> = idx.iter().map(|i| residuals[*i]).collect();
        out.extend(mark_components(&sub, m_r).into_iter().map(|k| idx[k]));
    }
    out
}

/// Distribution of global configurations: `n_dd` uniform in
/// `[n_dd_min, n_dd_max]`, parameters uniform per subdomain, one source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GlobalSampler {
    pub n_dd_min: usize,
    pub n_dd_max: usize,
}

impl Default for GlobalSampler {
    fn default() -> Self {
        Self { n_dd_min: 2, n_dd_max: 6 }
    }
}

impl GlobalSampler {
    pub fn validate(&self) -> Result<()> {
        if self.n_dd_min < 2 || self.n_dd_max < self.n_dd_min {
            return Err(Error::Config(format!(
                "invalid n_dd range [{}, {}] (need 2 <= min <= max)",
                self.n_dd_min, self.n_dd_max
            )));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> Result<GlobalConfiguration> {
        let n_dd = rng.random_range(self.n_dd_min..=self.n_dd_max);
        let params = (0..n_dd * n_dd).map(|_| sample_box(rng)).collect();
        let i_star = rng.random_range(1..=n_dd * n_dd);
        instantiate_configuration(n_dd, params, i_star)
    }
}

/// BRR termination with approximate constants. Unset constants are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BrrSettings {
    /// Reserve modes per archetype held out of the active space for `beta_app`.
    pub extra: usize,
    pub c_h: Option<f64>,
    pub lipschitz: Option<f64>,
    pub power_iterations: usize,
    pub lipschitz_samples: usize,
    pub lipschitz_radius: f64,
}

impl Default for BrrSettings {
    fn default() -> Self {
        Self {
            extra: 5,
            c_h: None,
            lipschitz: None,
            power_iterations: 30,
            lipschitz_samples: 3,
            lipschitz_radius: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnrichmentConfig {
    pub n_train_glo: usize,
    pub n_glo: usize,
    pub maxit: usize,
    /// Stop once the largest indicator over the training set is below this.
    pub tol: Option<f64>,
    /// Marking percentage.
    pub m_r: f64,
    pub mark_per_archetype: bool,
    pub sampler: GlobalSampler,
    pub newton: NewtonSettings,
    pub brr: Option<BrrSettings>,
}

impl Default for EnrichmentConfig {
    fn default() -> Self {
        Self {
            n_train_glo: 50,
            n_glo: 10,
            maxit: 3,
            tol: None,
            m_r: 25.0,
            mark_per_archetype: false,
            sampler: GlobalSampler::default(),
            newton: NewtonSettings::default(),
            brr: None,
        }
    }
}

impl EnrichmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.m_r > 0.0 && self.m_r <= 100.0) {
            return Err(Error::Config(format!("m_r must lie in (0, 100], got {}", self.m_r)));
        }
        if self.n_glo == 0 || self.n_train_glo == 0 {
            return Err(Error::Config("n_glo and n_train_glo must be positive".into()));
        }
        if self.tol.is_some_and(|t| t.is_nan() || t < 0.0) {
            return Err(Error::Config("tol must be non-negative".into()));
        }
        self.sampler.validate()?;
        self.newton.validate()
    }
}

/// One row per training configuration and iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnrichmentRow {
    pub iteration: usize,
    pub mu_id: usize,
    pub n_dd: usize,
    pub delta: f64,
    pub delta_brr: Option<f64>,
    pub tau: Option<f64>,
    pub marked: usize,
    pub skipped: usize,
    pub newton_iterations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationSummary {
    pub iteration: usize,
    pub max_delta: f64,
    pub max_delta_brr: Option<f64>,
    /// Snapshot counts per archetype (co, ed, int).
    pub dataset_sizes: [usize; 3],
    /// Basis sizes after the update.
    pub basis_sizes: [usize; 3],
    pub marked: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EnrichmentTrace {
    pub iterations: Vec<IterationSummary>,
    pub rows: Vec<EnrichmentRow>,
    pub terminated_early: bool,
}

impl EnrichmentTrace {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "iteration",
            "mu_id",
            "n_dd",
            "delta",
            "delta_brr",
            "tau",
            "marked",
            "skipped",
            "newton_iterations",
        ])?;
        for r in &self.rows {
            let opt = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:e}"));
            w.write_record([
                r.iteration.to_string(),
                r.mu_id.to_string(),
                r.n_dd.to_string(),
                format!("{:e}", r.delta),
                opt(r.delta_brr),
                opt(r.tau),
                r.marked.to_string(),
                r.skipped.to_string(),
                r.newton_iterations.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Coefficients of `u` in the larger space of `new`, assuming each archetype
/// basis of `new` extends that of `old`.
pub fn pad_coefficients(old: &RomSystem, new: &RomSystem, u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; new.dim()];
    for j in 0..old.n_components() {
        let n = old.block_size(j).min(new.block_size(j));
        out[new.offset(j)..new.offset(j) + n].copy_from_slice(&u[old.offset(j)..old.offset(j) + n]);
    }
    out
}

/// `Z` extended by the orthonormalized `extra` columns.
fn extend(lib: &ComponentLibrary, z: &[DMatrix<f64>], extra: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
    Archetype::ALL
        .iter()
        .map(|a| {
            let k = a.index();
            let g = &lib.get(*a).norm_gram;
            let add = orthonormalize_against(g, &z[k], &extra[k], 1e-8);
            if extra[k].ncols() > 0 && add.ncols() == 0 {
                return Err(Error::RankDeficientEnrichment);
            }
            Ok(hstack(&z[k], &add))
        })
        .collect()
}

fn hstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

struct MuOutcome {
    coef: Vec<f64>,
    delta: f64,
    brr: Option<(f64, Option<f64>)>,
    marked: Vec<usize>,
    corrections: Vec<(Archetype, Vec<f64>)>,
    skipped: usize,
    newton_iterations: usize,
}

/// Adaptive enrichment: per iteration, solve the reduced problem on every
/// training configuration, mark the components with the largest local
/// residuals, collect their local corrections and append the POD of the
/// part of the dataset not already captured by the bases.
pub fn enrich(
    lib: &Arc<ComponentLibrary>,
    bases: Vec<DMatrix<f64>>,
    config: &EnrichmentConfig,
    rng: &mut dyn RngCore,
) -> Result<(Vec<DMatrix<f64>>, EnrichmentTrace)> {
    config.validate()?;
    let (mut z, reserve) = match &config.brr {
        Some(b) => {
            let mut active = Vec::new();
            let mut reserve = Vec::new();
            for m in &bases {
                if m.ncols() <= b.extra {
                    return Err(Error::Config(format!(
                        "BRR needs more than {} modes per archetype, got {}",
                        b.extra,
                        m.ncols()
                    )));
                }
                let n = m.ncols() - b.extra;
                active.push(m.columns(0, n).into_owned());
                reserve.push(m.columns(n, b.extra).into_owned());
            }
            (active, Some(reserve))
        }
        None => (bases, None),
    };
    let configs: Vec<GlobalConfiguration> =
        (0..config.n_train_glo).map(|_| config.sampler.sample(rng)).collect::<Result<_>>()?;
    let seeds: Vec<u64> = (0..config.n_train_glo).map(|_| rng.next_u64()).collect();
    let spaces: Vec<Arc<PumSpace>> = configs
        .into_par_iter()
        .map(|c| PumSpace::new(c, lib).map(Arc::new))
        .collect::<Result<_>>()?;
    let mut c_h_cache: HashMap<usize, f64> = HashMap::new();
    if let Some(b) = &config.brr {
        if b.c_h.is_none() {
            let mut sizes: Vec<usize> = spaces.iter().map(|s| s.cfg.n_dd).collect();
            sizes.sort_unstable();
            sizes.dedup();
            for n in sizes {
                let s = spaces.iter().find(|s| s.cfg.n_dd == n).unwrap();
                let mut r = ChaCha8Rng::seed_from_u64(n as u64);
                c_h_cache.insert(n, estimate_c_h(&s.disc, &s.dirichlet, b.power_iterations, &mut r)?);
            }
        }
    }

    let mut warm: Vec<Option<(RomSystem, Vec<f64>)>> = vec![None; spaces.len()];
    let mut trace = EnrichmentTrace::default();
    for it in 1..=config.maxit {
        let tilde = match &reserve {
            Some(r) => Some(extend(lib, &z, r)?),
            None => None,
        };
        let outcomes: Vec<MuOutcome> = spaces
            .par_iter()
            .enumerate()
            .map(|(k, space)| -> Result<MuOutcome> {
                let ctx = |e: Error| e.with_context(format!("training configuration {k}, iteration {it}"));
                let form = space.cfg.model()?;
                let sys = assemble_rom(space.clone(), lib.clone(), &z)?;
                let init = warm[k].as_ref().map(|(old, u)| pad_coefficients(old, &sys, u));
                let (coef, rep) = solve_rom(&sys, &form, &config.newton, init.as_deref()).map_err(ctx)?;
                let field = sys.reconstruct(&coef);
                let res = local_residuals(space, lib, &field, &form)?;
                let delta = delta_indicator(&res);
                let brr = match (&config.brr, &tilde) {
                    (Some(b), Some(t)) => {
                        let big = assemble_rom(space.clone(), lib.clone(), t)?;
                        let ub = pad_coefficients(&sys, &big, &coef);
                        let beta = beta_app(&big, &form, &ub)?;
                        let mut r = ChaCha8Rng::seed_from_u64(seeds[k] ^ it as u64);
                        let lipschitz = match b.lipschitz {
                            Some(l) => l,
                            None => estimate_lipschitz(&big, &form, &ub, b.lipschitz_samples, b.lipschitz_radius, &mut r)?,
                        };
                        let c_h = b.c_h.unwrap_or_else(|| c_h_cache[&space.cfg.n_dd]);
                        let bound = global_residual_bound(&res, &[2f64.sqrt() / crate::components::DELTA], crate::components::OVERLAP_COUNT);
                        let est = brr_estimator(bound, &BrrConstants { beta, c_h, lipschitz: lipschitz.max(1e-300) })?;
                        Some((est.tau, est.delta))
                    }
                    _ => None,
                };
                let marked = if config.mark_per_archetype {
                    mark_per_archetype(&res, &space.cfg.labels, config.m_r)
                } else {
                    mark_components(&res, config.m_r)
                };
                let mut corrections = Vec::new();
                let mut skipped = 0;
                for i in &marked {
                    match local_correction(space, lib, *i, &field, &form, &config.newton) {
                        Ok(c) => corrections.push((space.cfg.labels[*i], c)),
                        Err(e) if e.is_solver_failure() => {
                            warn!("skipping component {i} of configuration {k}: {e}");
                            skipped += 1;
                        }
                        Err(e) => return Err(e),
                    }
                }
                Ok(MuOutcome {
                    coef,
                    delta,
                    brr,
                    marked,
                    corrections,
                    skipped,
                    newton_iterations: rep.iterations,
                })
            })
            .collect::<Result<_>>()?;

        let sys_now: Vec<RomSystem> =
            spaces.iter().map(|s| assemble_rom(s.clone(), lib.clone(), &z)).collect::<Result<_>>()?;
        let mut data: [Vec<Vec<f64>>; 3] = Default::default();
        let mut max_delta: f64 = 0.0;
        let mut max_brr: Option<f64> = None;
        let mut marked_all = Vec::new();
        for (k, o) in outcomes.into_iter().enumerate() {
            max_delta = max_delta.max(o.delta);
            let (tau, dbrr) = match o.brr {
                Some((t, d)) => (Some(t), Some(d.unwrap_or(f64::INFINITY))),
                None => (None, None),
            };
            if let Some(d) = dbrr {
                max_brr = Some(max_brr.unwrap_or(0.0).max(d));
            }
            trace.rows.push(EnrichmentRow {
                iteration: it,
                mu_id: k,
                n_dd: spaces[k].cfg.n_dd,
                delta: o.delta,
                delta_brr: dbrr.filter(|d| d.is_finite()),
                tau,
                marked: o.marked.len(),
                skipped: o.skipped,
                newton_iterations: o.newton_iterations,
            });
            for (a, c) in o.corrections {
                data[a.index()].push(c);
            }
            marked_all.push(o.marked);
            warm[k] = Some((sys_now[k].clone(), o.coef));
        }

        let dataset_sizes = [data[0].len(), data[1].len(), data[2].len()];
        for a in Archetype::ALL {
            let k = a.index();
            if data[k].is_empty() {
                continue;
            }
            let g = &lib.get(a).norm_gram;
            let w = DMatrix::from_fn(g.nrows(), data[k].len(), |r, c| data[k][c][r]);
            let proj = &z[k] * (z[k].transpose() * g.mul_dense(&w));
            let resid = w - proj;
            let n = config.n_glo.min(resid.ncols());
            let p = pod(&resid, g, n)?;
            let add = orthonormalize_against(g, &z[k], &p.modes, 1e-8);
            z[k] = hstack(&z[k], &add);
        }
        let basis_sizes = [z[0].ncols(), z[1].ncols(), z[2].ncols()];
        info!("enrichment iteration {it}: max delta {max_delta:.3e}, bases {basis_sizes:?}");
        trace.iterations.push(IterationSummary {
            iteration: it,
            max_delta,
            max_delta_brr: max_brr,
            dataset_sizes,
            basis_sizes,
            marked: marked_all,
        });
        let indicator = if config.brr.is_some() { max_brr.unwrap_or(f64::INFINITY) } else { max_delta };
        if config.tol.is_some_and(|t| indicator < t) {
            trace.terminated_early = it < config.maxit;
            break;
        }
    }
    if let Some(r) = reserve {
        for (zk, rk) in z.iter_mut().zip(r) {
            *zk = hstack(zk, &rk);
        }
    }
    Ok((z, trace))
}

/// Trace of the simplified algorithm on a linear coercive problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearEnrichmentTrace {
    /// `||u - u_hat_l||_a` for `l = 0..=maxit`.
    pub errors: Vec<f64>,
    /// Largest local energy residual `r^(k)[u_hat_l]` and its component.
    pub residuals: Vec<f64>,
    pub picked: Vec<usize>,
    /// `(1 - 1/(N_dd c_pu^2))^(l/2) errors[0]`.
    pub bound: Vec<f64>,
    pub c_pu: f64,
    pub n_dd: usize,
}

/// One exact local solve on the component with the largest energy residual
/// per iteration, appended to its archetype basis.
pub fn simplified_enrich_linear(
    space: &Arc<PumSpace>,
    lib: &Arc<ComponentLibrary>,
    model: &LinearCoercive,
    z0: Vec<DMatrix<f64>>,
    maxit: usize,
) -> Result<LinearEnrichmentTrace> {
    let bilinear = model.bilinear();
    let newton_settings = NewtonSettings::default();
    let (exact, _) = solve_hf(space, model, &newton_settings)?;
    let zero = vec![0.0; space.disc.ndofs()];
    let (_, a) = crate::fem::assemble_jacobian(&space.disc, &bilinear, &crate::fem::RotoTranslation::identity(), &zero)?;
    let energy = EnergyResiduals::new(space, lib, &bilinear)?;
    let pou = crate::components::build_pou(&space.cfg, &space.disc, crate::components::DELTA)?;
    let c_pu = (pou.overlap_count as f64).sqrt() * c_r(pou.c_bound);
    let rate = (1.0 - 1.0 / (space.n_components() as f64 * c_pu * c_pu)).sqrt();

    let mut z = z0;
    let mut trace = LinearEnrichmentTrace {
        errors: Vec::new(),
        residuals: Vec::new(),
        picked: Vec::new(),
        bound: Vec::new(),
        c_pu,
        n_dd: space.cfg.n_dd,
    };
    for l in 0..=maxit {
        let sys = assemble_rom(space.clone(), lib.clone(), &z)?;
        let (coef, _) = solve_rom(&sys, model, &newton_settings, None)?;
        let field = sys.reconstruct(&coef);
        let e: Vec<f64> = exact.iter().zip(&field).map(|(x, y)| x - y).collect();
        let err = a.quad_form(&e).max(0.0).sqrt();
        trace.errors.push(err);
        trace.bound.push(rate.powi(l as i32) * trace.errors[0]);
        if l == maxit {
            break;
        }
        let res = energy.residuals(&field, model)?;
        let k = mark_components(&res, f64::MIN_POSITIVE)[0];
        trace.residuals.push(res[k]);
        trace.picked.push(k);
        if res[k] == 0.0 {
            continue;
        }
        let label = space.cfg.labels[k];
        let comp = lib.get(label);
        let d = energy.correction(k, &field, model)?;
        let zeta = divide_by_weight(&comp.weight, &d);
        let cand = DMatrix::from_column_slice(zeta.len(), 1, &zeta);
        let add = orthonormalize_against(&comp.norm_gram, &z[label.index()], &cand, 1e-10);
        z[label.index()] = hstack(&z[label.index()], &add);
    }
    Ok(trace)
}
