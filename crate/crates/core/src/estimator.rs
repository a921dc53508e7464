//! Localized Riesz residuals, the global residual bound and the
//! Brezzi-Rappaz-Raviart estimate with approximate constants.

use nalgebra::DMatrix;
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::components::{ComponentLibrary, PumSpace};
use crate::error::{Error, Result};
use crate::fem::{assemble_h1_seminorm_gram, assemble_jacobian, assemble_residual, Discretization, MaskedGram, WeakForm};
use crate::linalg::SparseMatrix;
use crate::rom::{reduced_jacobian, RomSystem};

/// `C^r = sqrt(max(C + C^2 + 1, 2))`
pub fn c_r(c: f64) -> f64 {
    (c + c * c + 1.0).max(2.0).sqrt()
}

/// `Delta = sqrt(sum r_i^2)`
pub fn delta_indicator(residuals: &[f64]) -> f64 {
    residuals.iter().map(|r| r * r).sum::<f64>().sqrt()
}

/// `R = sqrt(M) max_i C_i^r Delta`
pub fn global_residual_bound(residuals: &[f64], c: &[f64], m: usize) -> f64 {
    let cmax = c.iter().map(|x| c_r(*x)).fold(0.0, f64::max);
    (m as f64).sqrt() * cmax * delta_indicator(residuals)
}

/// Nodal field of component `i` on its reference mesh.
pub fn gather(space: &PumSpace, i: usize, u: &[f64]) -> Vec<f64> {
    space.ref_to_global[i].iter().map(|g| u[*g]).collect()
}

/// Local residual covector `int eta(u, N_l)` on the reference mesh of `i`.
pub fn local_residual_covector(
    space: &PumSpace,
    lib: &ComponentLibrary,
    i: usize,
    u: &[f64],
    form: &dyn WeakForm,
) -> Result<Vec<f64>> {
    let comp = lib.get(space.cfg.labels[i]);
    assemble_residual(&comp.disc, form, &space.cfg.maps[i], &gather(space, i, u))
}

/// `r^(i) = sup_{v in X_{i,0}} G(u, v) / ||v||_{1, omega_i}`.
pub fn local_riesz_residual(
    space: &PumSpace,
    lib: &ComponentLibrary,
    i: usize,
    u: &[f64],
    form: &dyn WeakForm,
) -> Result<f64> {
    let comp = lib.get(space.cfg.labels[i]);
    let r = local_residual_covector(space, lib, i, u, form)?;
    Ok(comp.riesz.dual_norm(&r))
}

/// All local residuals in the H1 inner product.
pub fn local_residuals(space: &PumSpace, lib: &ComponentLibrary, u: &[f64], form: &dyn WeakForm) -> Result<Vec<f64>> {
    (0..space.n_components())
        .into_par_iter()
        .map(|i| local_riesz_residual(space, lib, i, u, form))
        .collect()
}

/// Local residuals in the energy inner product of a symmetric coercive
/// linear form. The Gram depends on the physical location of each component,
/// so one factorization per component is cached.
pub struct EnergyResiduals<'a> {
    space: &'a PumSpace,
    lib: &'a ComponentLibrary,
    grams: Vec<MaskedGram>,
}

impl<'a> EnergyResiduals<'a> {
    /// `bilinear` must be the load-free part of the form.
    pub fn new(space: &'a PumSpace, lib: &'a ComponentLibrary, bilinear: &dyn WeakForm) -> Result<Self> {
        crate::training::require_linear(bilinear, "energy residuals")?;
        let grams = (0..space.n_components())
            .into_par_iter()
            .map(|i| {
                let comp = lib.get(space.cfg.labels[i]);
                let zero = vec![0.0; comp.ndofs()];
                let (_, a) = assemble_jacobian(&comp.disc, bilinear, &space.cfg.maps[i], &zero)?;
                MaskedGram::new(&a, &comp.interior)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { space, lib, grams })
    }

    pub fn residual(&self, i: usize, u: &[f64], form: &dyn WeakForm) -> Result<f64> {
        let r = local_residual_covector(self.space, self.lib, i, u, form)?;
        Ok(self.grams[i].dual_norm(&r))
    }

    pub fn residuals(&self, u: &[f64], form: &dyn WeakForm) -> Result<Vec<f64>> {
        (0..self.space.n_components())
            .into_par_iter()
            .map(|i| self.residual(i, u, form))
            .collect()
    }

    /// Local correction `delta` in `X_{i,0}` with `a(delta, v) = -G(u, v)`,
    /// on the reference mesh of `i`.
    pub fn correction(&self, i: usize, u: &[f64], form: &dyn WeakForm) -> Result<Vec<f64>> {
        let r = local_residual_covector(self.space, self.lib, i, u, form)?;
        let (psi, _) = self.grams[i].riesz(&r);
        Ok(psi.into_iter().map(|x| -x).collect())
    }
}

/// Dual norm `sqrt(f^T G^-1 f)` over the non-Dirichlet DOFs of the global mesh.
pub struct GlobalDualNorm {
    gram: MaskedGram,
}

impl GlobalDualNorm {
    pub fn new(gram: &SparseMatrix, dirichlet: &[bool]) -> Result<Self> {
        let free: Vec<bool> = dirichlet.iter().map(|d| !d).collect();
        Ok(Self { gram: MaskedGram::new(gram, &free)? })
    }

    pub fn norm(&self, covector: &[f64]) -> f64 {
        self.gram.dual_norm(covector)
    }
}

/// `|| G(u, .) ||_{-1}` with the given Gram (H1 by default in callers).
pub fn global_dual_residual(space: &PumSpace, dual: &GlobalDualNorm, u: &[f64], form: &dyn WeakForm) -> Result<f64> {
    let r = crate::rom::hf_residual(space, form, u)?;
    Ok(dual.norm(&r))
}

/// Approximate constants of the BRR estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrrConstants {
    pub beta: f64,
    pub c_h: f64,
    pub lipschitz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrrEstimate {
    pub tau: f64,
    /// `None` when the proximity condition `tau < 1` fails.
    pub delta: Option<f64>,
}

/// `tau = 2 L c_h R / beta^2`; `Delta = beta / (L c_h) (1 - sqrt(1 - tau))`.
pub fn brr_estimator(bound: f64, k: &BrrConstants) -> Result<BrrEstimate> {
    if !(k.beta > 0.0) {
        return Err(Error::NonPositiveConstant("beta"));
    }
    if !(k.c_h > 0.0) {
        return Err(Error::NonPositiveConstant("c_h"));
    }
    if !(k.lipschitz > 0.0) {
        return Err(Error::NonPositiveConstant("L"));
    }
    let s = k.lipschitz * k.c_h;
    let tau = 2.0 * s * bound / (k.beta * k.beta);
    let delta = (tau < 1.0).then(|| k.beta / s * (1.0 - (1.0 - tau).sqrt()));
    Ok(BrrEstimate { tau, delta })
}

fn chol_lower(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    nalgebra::Cholesky::new(sym).map(|c| c.l()).ok_or(Error::RankDeficientEnrichment)
}

/// `L^-1 A L^-T` for `S = L L^T`.
fn precondition(a: &DMatrix<f64>, l: &DMatrix<f64>) -> DMatrix<f64> {
    let x = l.solve_lower_triangular(a).expect("triangular solve");
    let y = l.solve_lower_triangular(&x.transpose()).expect("triangular solve");
    y.transpose()
}

/// H1 seminorm Gram of the reduced space, `B^T K B`.
pub fn reduced_seminorm_gram(sys: &RomSystem) -> DMatrix<f64> {
    let k = assemble_h1_seminorm_gram(&sys.space.disc);
    let b = sys.basis_matrix().to_dense();
    b.transpose() * k.mul_dense(&b)
}

/// Inf-sup of the linearized form at `u` over the reduced space of `sys`
/// (typically an enriched space) in the H1 seminorm.
pub fn beta_app(sys: &RomSystem, form: &dyn WeakForm, u: &[f64]) -> Result<f64> {
    let (_, j) = reduced_jacobian(sys, form, u)?;
    let l = chol_lower(&reduced_seminorm_gram(sys))?;
    let p = precondition(&j.to_dense(), &l);
    Ok(p.singular_values().min())
}

/// `(int |grad v|^4)^(1/4)`
pub fn w14_seminorm(disc: &Discretization, v: &[f64]) -> f64 {
    (0..disc.n_elems())
        .map(|e| {
            let q = disc.quad_points(e);
            disc.eval_at_quad(e, v)
                .iter()
                .zip(&q)
                .map(|((_, g), (_, w))| w * (g[0] * g[0] + g[1] * g[1]).powi(2))
                .sum::<f64>()
        })
        .sum::<f64>()
        .powf(0.25)
}

/// Gradient of `v -> int |grad v|^4`.
fn w14_gradient(disc: &Discretization, v: &[f64]) -> Vec<f64> {
    let t = disc.table();
    let mut out = vec![0.0; disc.ndofs()];
    for e in 0..disc.n_elems() {
        let dofs = disc.elem_dofs_vec(e);
        let (_, _, hx, hy) = disc.elem_geom(e);
        let q = disc.quad_points(e);
        for (qi, (_, g)) in disc.eval_at_quad(e, v).iter().enumerate() {
            let w = q[qi].1;
            let s = 4.0 * w * (g[0] * g[0] + g[1] * g[1]);
            for (l, d) in dofs.iter().enumerate() {
                let k = qi * t.nl + l;
                out[*d] += s * (g[0] * t.dxi[k] * 2.0 / hx + g[1] * t.deta[k] * 2.0 / hy);
            }
        }
    }
    out
}

/// `c_h ~ max |v|_{W^{1,4}} / |v|_{H1}` over the zero-trace HF space by a
/// nonlinear power iteration.
pub fn estimate_c_h(disc: &Discretization, dirichlet: &[bool], iterations: usize, rng: &mut dyn RngCore) -> Result<f64> {
    let k = assemble_h1_seminorm_gram(disc);
    let free: Vec<bool> = dirichlet.iter().map(|d| !d).collect();
    let mg = MaskedGram::new(&k, &free)?;
    let mut v: Vec<f64> = (0..disc.ndofs())
        .map(|i| if free[i] { rng.random::<f64>() - 0.5 } else { 0.0 })
        .collect();
    let mut best: f64 = 0.0;
    for _ in 0..iterations {
        let h1 = k.quad_form(&v).max(0.0).sqrt();
        if h1 == 0.0 {
            break;
        }
        v.iter_mut().for_each(|x| *x /= h1);
        best = best.max(w14_seminorm(disc, &v));
        let g = w14_gradient(disc, &v);
        let (psi, _) = mg.riesz(&g);
        v = psi;
    }
    Ok(best)
}

/// Sampled Lipschitz constant of the reduced Jacobian around `u` in the
/// `W^{1,4}` seminorm, with Jacobian differences measured in the
/// H1-seminorm operator norm.
pub fn estimate_lipschitz(
    sys: &RomSystem,
    form: &dyn WeakForm,
    u: &[f64],
    samples: usize,
    radius: f64,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    let l = chol_lower(&reduced_seminorm_gram(sys))?;
    let mut best: f64 = 0.0;
    for _ in 0..samples {
        let dir: Vec<f64> = (0..sys.dim()).map(|_| rng.random::<f64>() - 0.5).collect();
        let field = sys.reconstruct(&dir);
        let h1 = w14_seminorm(&sys.space.disc, &field);
        if h1 == 0.0 {
            continue;
        }
        let scale = radius / h1;
        let up: Vec<f64> = u.iter().zip(&dir).map(|(a, b)| a + scale * b).collect();
        let (_, ja) = reduced_jacobian(sys, form, u)?;
        let (_, jb) = reduced_jacobian(sys, form, &up)?;
        let diff = jb.to_dense() - ja.to_dense();
        let s = precondition(&diff, &l).singular_values().max();
        best = best.max(s / radius);
    }
    Ok(best)
}

/// Error quantities of one reduced solution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorReport {
    pub residuals: Vec<f64>,
    pub delta: f64,
    pub bound: f64,
    pub c: f64,
    pub c_r: f64,
    pub m: usize,
    pub brr: Option<(BrrConstants, BrrEstimate)>,
}

impl ErrorReport {
    pub fn new(residuals: Vec<f64>, c: f64, m: usize) -> Self {
        let delta = delta_indicator(&residuals);
        let bound = global_residual_bound(&residuals, &[c], m);
        Self { residuals, delta, bound, c, c_r: c_r(c), m, brr: None }
    }

    pub fn with_brr(mut self, k: BrrConstants) -> Result<Self> {
        let est = brr_estimator(self.bound, &k)?;
        self.brr = Some((k, est));
        Ok(self)
    }
}

/// Sparse Cholesky of the global H1 Gram on free DOFs, for oracles.
pub fn global_h1_dual(space: &PumSpace) -> Result<GlobalDualNorm> {
    GlobalDualNorm::new(&crate::rom::global_h1_gram(space), &space.dirichlet)
}

