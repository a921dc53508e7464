//! Randomized localized training: boundary and parameter samplers, transfer
//! solves on oversampling patches, POD and projection-error indicators, plus
//! the linear advection-diffusion-reaction setup with its transfer-eigenvalue
//! baseline.

use std::f64::consts::PI;
use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::components::{Archetype, ArchetypeComponent, H};
use crate::error::{Error, Result};
use crate::fem::{
    assemble_h1_gram, assemble_jacobian, build_discretization, io, solve_nonlinear, Discretization, NewtonSettings,
    Rect, RotoTranslation,
};
use crate::linalg::{orthonormalize_against, sym_eigen_desc, SparseLu, SparseMatrix};
use crate::models::{LinearAdr, NonlinearDiffusion, P_ADR, P_HAT};

const MAX_RETRIES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Smooth,
    Gaussian,
}

/// Boundary and parameter sampler settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSettings {
    pub kind: SamplerKind,
    pub n_f: usize,
    pub alpha: f64,
    pub u_max: f64,
    /// Contraction of the Fourier argument for corner/edge patches.
    pub stretch: f64,
    pub p_src: f64,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        Self {
            kind: SamplerKind::Smooth,
            n_f: 20,
            alpha: 1.0,
            u_max: 0.5,
            stretch: 0.7,
            p_src: 0.5,
        }
    }
}

impl SamplerSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = self.n_f >= 1
            && self.alpha >= 0.0
            && self.u_max > 0.0
            && self.u_max <= 1.0
            && self.stretch > 0.0
            && self.stretch < 1.0
            && (0.0..=1.0).contains(&self.p_src);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid sampler settings {self:?}")))
        }
    }
}

/// `g(s) = sum_k (c_re + i c_im) / sqrt(1 + (2 pi k)^(2 alpha)) e^(2 pi i k s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierField {
    pub alpha: f64,
    pub c_re: Vec<f64>,
    pub c_im: Vec<f64>,
}

pub fn fourier_weight(k: usize, alpha: f64) -> f64 {
    1.0 / (1.0 + (2.0 * PI * k as f64).powf(2.0 * alpha)).sqrt()
}

pub fn sample_fourier_field(n_f: usize, alpha: f64, rng: &mut dyn RngCore) -> FourierField {
    let mut draw = || -> Vec<f64> { (0..n_f).map(|_| StandardNormal.sample(&mut *rng)).collect() };
    let c_re = draw();
    let c_im = draw();
    FourierField { alpha, c_re, c_im }
}

impl FourierField {
    pub fn n_f(&self) -> usize {
        self.c_re.len()
    }

    /// `(Re g(s), Im g(s))`
    pub fn eval(&self, s: f64) -> (f64, f64) {
        let (mut re, mut im) = (0.0, 0.0);
        for k in 0..self.n_f() {
            let w = fourier_weight(k, self.alpha);
            let (sn, cs) = (2.0 * PI * k as f64 * s).sin_cos();
            re += w * (self.c_re[k] * cs - self.c_im[k] * sn);
            im += w * (self.c_re[k] * sn + self.c_im[k] * cs);
        }
        (re, im)
    }

    pub fn real(&self, s: f64) -> f64 {
        self.eval(s).0
    }

    /// Exact `||g||^2_{L2} + ||g^(alpha)||^2_{L2}` from the coefficients.
    pub fn h_alpha_norm2(&self) -> f64 {
        (0..self.n_f())
            .map(|k| {
                let w = fourier_weight(k, self.alpha);
                (self.c_re[k].powi(2) + self.c_im[k].powi(2)) * w * w * (1.0 + (2.0 * PI * k as f64).powf(2.0 * self.alpha))
            })
            .sum()
    }

    /// Same norm by Gauss quadrature on `n_sub` subintervals (integer alpha).
    pub fn h_alpha_norm2_quadrature(&self, n_sub: usize) -> f64 {
        let order = self.alpha.round() as i32;
        let (pts, wts) = crate::fem::quadrature::gauss_legendre(8);
        let mut total = 0.0;
        for j in 0..n_sub {
            let (a, b) = (j as f64 / n_sub as f64, (j + 1) as f64 / n_sub as f64);
            for (x, w) in pts.iter().zip(&wts) {
                let s = a + (b - a) * (x + 1.0) / 2.0;
                let (mut v, mut d) = ((0.0, 0.0), (0.0, 0.0));
                for k in 0..self.n_f() {
                    let wk = fourier_weight(k, self.alpha);
                    let (sn, cs) = (2.0 * PI * k as f64 * s).sin_cos();
                    let (re, im) = (wk * (self.c_re[k] * cs - self.c_im[k] * sn), wk * (self.c_re[k] * sn + self.c_im[k] * cs));
                    v.0 += re;
                    v.1 += im;
                    // i^order (2 pi k)^order times the term
                    let f = (2.0 * PI * k as f64).powi(order);
                    let (dr, di) = match order.rem_euclid(4) {
                        0 => (re, im),
                        1 => (-im, re),
                        2 => (-re, -im),
                        _ => (im, -re),
                    };
                    d.0 += f * dr;
                    d.1 += f * di;
                }
                total += w * (b - a) / 2.0 * (v.0 * v.0 + v.1 * v.1 + d.0 * d.0 + d.1 * d.1);
            }
        }
        total
    }
}

/// Boundary data on the inlet DOFs of a patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySample {
    pub values: Vec<f64>,
    pub kind: SamplerKind,
    pub alpha: f64,
    pub n_f: usize,
    pub u_max: Option<f64>,
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)))
}

fn rescale(v: &[f64], a: f64, b: f64) -> Option<Vec<f64>> {
    let (lo, hi) = min_max(v);
    let scale = hi - lo;
    if !(scale > 1e-14 * (1.0 + lo.abs().max(hi.abs()))) {
        return None;
    }
    Some(v.iter().map(|x| a + (b - a) * (x - lo) / scale).collect())
}

/// Smooth sampler for inlet points with arclength coordinates `s`.
pub fn sample_bc(arch: Archetype, s: &[f64], settings: &SamplerSettings, rng: &mut dyn RngCore) -> Result<BoundarySample> {
    let unif = Uniform::new(0.0, settings.u_max).map_err(|e| Error::Config(e.to_string()))?;
    for _ in 0..MAX_RETRIES {
        let field = sample_fourier_field(settings.n_f, settings.alpha, rng);
        let (x1, x2, x3): (f64, f64, f64) = (unif.sample(rng), unif.sample(rng), unif.sample(rng));
        let (a, b) = (x1.min(x2), x1.max(x2));
        let values = match arch {
            Archetype::Int => {
                let g1: Vec<f64> = s.iter().map(|t| field.real(*t)).collect();
                match rescale(&g1, a, b) {
                    Some(g) => g,
                    None => continue,
                }
            }
            _ => {
                let g2: Vec<f64> = s.iter().map(|t| field.real(settings.stretch * t)).collect();
                let Some(r) = rescale(&g2, a, b) else { continue };
                let g3: Vec<f64> = r.iter().zip(s).map(|(v, t)| v * t * (1.0 - t)).collect();
                let peak = min_max(&g3).1;
                if !(peak > 0.0) {
                    continue;
                }
                g3.iter().map(|v| x3 * v / peak).collect()
            }
        };
        return Ok(BoundarySample {
            values,
            kind: SamplerKind::Smooth,
            alpha: settings.alpha,
            n_f: settings.n_f,
            u_max: Some(settings.u_max),
        });
    }
    Err(Error::DegenerateSample { retries: MAX_RETRIES })
}

/// Unscaled `Re g(s)` (linear problems).
pub fn sample_fourier_bc(s: &[f64], n_f: usize, alpha: f64, rng: &mut dyn RngCore) -> BoundarySample {
    let field = sample_fourier_field(n_f, alpha, rng);
    BoundarySample {
        values: s.iter().map(|t| field.real(*t)).collect(),
        kind: SamplerKind::Smooth,
        alpha,
        n_f,
        u_max: None,
    }
}

/// Nodal Gaussian sampler: iid `N(0, 1)` when `u_max` is `None`, otherwise
/// `N(u_max/2, u_max^2/4)` clamped to `[0, u_max]`. Corner and edge samples
/// vanish at the path ends.
pub fn sample_gaussian_bc(arch: Archetype, s: &[f64], u_max: Option<f64>, rng: &mut dyn RngCore) -> BoundarySample {
    let values = s
        .iter()
        .map(|t| {
            let z: f64 = StandardNormal.sample(&mut *rng);
            if arch != Archetype::Int && (*t == 0.0 || *t == 1.0) {
                return 0.0;
            }
            match u_max {
                None => z,
                Some(u) => (u / 2.0 + u / 2.0 * z).clamp(0.0, u),
            }
        })
        .collect();
    BoundarySample {
        values,
        kind: SamplerKind::Gaussian,
        alpha: 0.0,
        n_f: 0,
        u_max,
    }
}

/// Dispatches on the sampler kind.
pub fn draw_bc(arch: Archetype, s: &[f64], settings: &SamplerSettings, rng: &mut dyn RngCore) -> Result<BoundarySample> {
    match settings.kind {
        SamplerKind::Smooth => sample_bc(arch, s, settings, rng),
        SamplerKind::Gaussian => Ok(sample_gaussian_bc(arch, s, Some(settings.u_max), rng)),
    }
}

/// Patch parameters: `(mu1, mu2)` per cell and a one-based source cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalParams {
    pub params: Vec<[f64; 2]>,
    pub i_star: usize,
}

pub fn sample_box(rng: &mut dyn RngCore) -> [f64; 2] {
    [
        rng.random_range(P_HAT[0][0]..=P_HAT[0][1]),
        rng.random_range(P_HAT[1][0]..=P_HAT[1][1]),
    ]
}

pub fn sample_local_parameters(arch: Archetype, p_src: f64, rng: &mut dyn RngCore) -> LocalParams {
    let n = arch.patch_cells();
    let params = (0..n).map(|_| sample_box(rng)).collect();
    let u: f64 = rng.random();
    let i_star = if u < p_src { 1 + ((u / p_src) * n as f64).floor().min(n as f64 - 1.0) as usize } else { 0 };
    LocalParams { params, i_star }
}

/// Nonlinear transfer solve on the patch restricted to the reference domain.
pub fn solve_transfer(
    comp: &ArchetypeComponent,
    mu: &LocalParams,
    g: &BoundarySample,
    settings: &NewtonSettings,
) -> Result<Vec<f64>> {
    let patch = &comp.patch;
    if g.values.len() != patch.inlet.len() {
        return Err(Error::DimensionMismatch("boundary sample does not match the inlet".into()));
    }
    let model = NonlinearDiffusion::new(patch.grid, mu.params.clone(), mu.i_star.checked_sub(1))?;
    let mut g_dir = vec![0.0; patch.disc.ndofs()];
    for ((dof, _), v) in patch.inlet.iter().zip(&g.values) {
        g_dir[*dof] = *v;
    }
    let (u, _) = solve_nonlinear(&patch.disc, &model, &patch.dirichlet, &g_dir, settings, None)
        .map_err(|e| e.with_context(format!("{} transfer solve, mu = {:?}", comp.archetype, mu)))?;
    Ok(comp.restrict(&u))
}

/// Orthonormal reduced basis of one archetype in the local norm.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedBasis {
    pub archetype: Archetype,
    /// Columns are modes on the reference nodes.
    pub modes: DMatrix<f64>,
    /// Snapshot Gram eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    pub rank_deficient: bool,
}

impl ReducedBasis {
    pub fn empty(archetype: Archetype, ndofs: usize) -> Self {
        Self {
            archetype,
            modes: DMatrix::zeros(ndofs, 0),
            eigenvalues: Vec::new(),
            rank_deficient: false,
        }
    }

    pub fn n(&self) -> usize {
        self.modes.ncols()
    }

    /// Leading `n` modes (nested).
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.n());
        Self {
            archetype: self.archetype,
            modes: self.modes.columns(0, n).into_owned(),
            eigenvalues: self.eigenvalues.clone(),
            rank_deficient: self.rank_deficient,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        io::write_matrix(path.as_ref(), &self.modes)?;
        let meta = serde_json::json!({
            "archetype": self.archetype,
            "n": self.n(),
            "eigenvalues": self.eigenvalues,
            "rank_deficient": self.rank_deficient,
        });
        std::fs::write(io::sidecar_path(path.as_ref()), serde_json::to_vec_pretty(&meta)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let modes = io::read_matrix(path.as_ref())?;
        let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(io::sidecar_path(path.as_ref()))?)?;
        let archetype: Archetype = serde_json::from_value(meta["archetype"].clone())?;
        let eigenvalues: Vec<f64> = serde_json::from_value(meta["eigenvalues"].clone()).unwrap_or_default();
        let rank_deficient = meta["rank_deficient"].as_bool().unwrap_or(false);
        Ok(Self { archetype, modes, eigenvalues, rank_deficient })
    }
}

/// Output of [`pod`].
#[derive(Debug, Clone)]
pub struct Pod {
    pub modes: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub rank_deficient: bool,
}

/// Method of snapshots in the inner product of `gram`; snapshots are columns.
pub fn pod(snapshots: &DMatrix<f64>, gram: &SparseMatrix, n: usize) -> Result<Pod> {
    if snapshots.nrows() != gram.nrows() {
        return Err(Error::DimensionMismatch("snapshot length differs from Gram size".into()));
    }
    let ns = snapshots.ncols();
    if n > ns {
        return Err(Error::InvalidInput(format!("{n} modes requested from {ns} snapshots")));
    }
    if ns == 0 || n == 0 {
        return Ok(Pod {
            modes: DMatrix::zeros(snapshots.nrows(), 0),
            eigenvalues: Vec::new(),
            rank_deficient: false,
        });
    }
    let gs = gram.mul_dense(snapshots);
    let mut k = snapshots.transpose() * &gs;
    k = (&k + k.transpose()) * 0.5;
    let (lambda, v) = sym_eigen_desc(&k);
    let tol = 1e-12 * lambda[0].max(0.0);
    let rank = lambda.iter().take_while(|l| **l > tol).count();
    let keep = n.min(rank);
    let mut cand = DMatrix::zeros(snapshots.nrows(), keep);
    for j in 0..keep {
        let col = snapshots * v.column(j) / lambda[j].sqrt();
        cand.set_column(j, &col);
    }
    let modes = orthonormalize_against(gram, &DMatrix::zeros(snapshots.nrows(), 0), &cand, 1e-8);
    let rank_deficient = modes.ncols() < n;
    if rank_deficient {
        warn!("POD: {} of {n} requested modes available", modes.ncols());
    }
    Ok(Pod { modes, eigenvalues: lambda, rank_deficient })
}

/// Relative projection errors `||w - P_n w|| / ||w||` for `n = 0..=modes`,
/// per snapshot (rows) with `modes` orthonormal in `gram`.
pub fn projection_errors(modes: &DMatrix<f64>, gram: &SparseMatrix, snapshots: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let nm = modes.ncols();
    let gz = gram.mul_dense(modes);
    let mut out = DMatrix::zeros(snapshots.ncols(), nm + 1);
    for (i, w) in snapshots.column_iter().enumerate() {
        let mut r: DVector<f64> = w.into_owned();
        let norm = gram.quad_form(r.as_slice()).max(0.0).sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroSnapshot(i));
        }
        out[(i, 0)] = 1.0;
        for k in 0..nm {
            let c = gz.column(k).dot(&w);
            r.axpy(-c, &modes.column(k), 1.0);
            out[(i, k + 1)] = gram.quad_form(r.as_slice()).max(0.0).sqrt() / norm;
        }
    }
    Ok(out)
}

/// Average relative projection error of the test snapshots onto the basis.
pub fn projection_error_indicator(modes: &DMatrix<f64>, gram: &SparseMatrix, test: &DMatrix<f64>) -> Result<f64> {
    if test.ncols() == 0 {
        return Err(Error::InvalidInput("empty test set".into()));
    }
    let e = projection_errors(modes, gram, test)?;
    Ok(e.column(modes.ncols()).mean())
}

/// Settings of [`localized_training`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSettings {
    pub n_train: usize,
    pub n: usize,
    pub sampler: SamplerSettings,
    pub newton: NewtonSettings,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        Self {
            n_train: 200,
            n: 40,
            sampler: SamplerSettings::default(),
            newton: NewtonSettings::default(),
        }
    }
}

/// Basis plus the snapshot set it was compressed from.
#[derive(Debug, Clone)]
pub struct TrainingOutput {
    pub basis: ReducedBasis,
    pub snapshots: DMatrix<f64>,
    pub failures: usize,
}

/// Draws `n_train` patch problems, solves them and compresses by POD.
pub fn localized_training(
    comp: &ArchetypeComponent,
    settings: &TrainingSettings,
    rng: &mut dyn RngCore,
) -> Result<TrainingOutput> {
    settings.sampler.validate()?;
    settings.newton.validate()?;
    if settings.n > settings.n_train {
        return Err(Error::InvalidInput("n must not exceed n_train".into()));
    }
    let s: Vec<f64> = comp.patch.inlet.iter().map(|p| p.1).collect();
    let mut draws = Vec::with_capacity(settings.n_train);
    for _ in 0..settings.n_train {
        let mu = sample_local_parameters(comp.archetype, settings.sampler.p_src, rng);
        let g = draw_bc(comp.archetype, &s, &settings.sampler, rng)?;
        draws.push((mu, g));
    }
    let results: Vec<Result<Vec<f64>>> = draws
        .par_iter()
        .map(|(mu, g)| solve_transfer(comp, mu, g, &settings.newton))
        .collect();
    let mut cols = Vec::new();
    let mut failures = 0;
    for r in results {
        match r {
            Ok(u) => cols.push(DVector::from_vec(u)),
            Err(e) if e.is_solver_failure() => {
                warn!("{e}");
                failures += 1;
            }
            Err(e) => return Err(e),
        }
    }
    if failures * 10 > settings.n_train {
        return Err(Error::TrainingFailures { failed: failures, total: settings.n_train });
    }
    let snapshots = if cols.is_empty() { DMatrix::zeros(comp.ndofs(), 0) } else { DMatrix::from_columns(&cols) };
    let p = pod(&snapshots, &comp.norm_gram, settings.n.min(snapshots.ncols()))?;
    Ok(TrainingOutput {
        basis: ReducedBasis {
            archetype: comp.archetype,
            modes: p.modes,
            eigenvalues: p.eigenvalues,
            rank_deficient: p.rank_deficient,
        },
        snapshots,
        failures,
    })
}

/// Linear advection-diffusion-reaction transfer problem on `U = (0, 3H)^2`
/// with the extracted domain `(H, 2H)^2`.
#[derive(Debug, Clone)]
pub struct LinearSetup {
    pub disc: Discretization,
    pub dirichlet: Vec<bool>,
    /// Boundary DOFs with arclength coordinate (counter-clockwise from the origin).
    pub inlet: Vec<(usize, f64)>,
    pub omega: Discretization,
    /// Global DOF of every extracted-domain DOF.
    pub omega_dofs: Vec<usize>,
    /// H1 Gram on the extracted domain.
    pub gram: SparseMatrix,
}

impl LinearSetup {
    /// `elems x elems` uniform mesh; `elems` must be a multiple of 3.
    pub fn new(elems: usize, degree: usize) -> Result<Self> {
        if elems == 0 || elems % 3 != 0 {
            return Err(Error::MeshNotConforming("element count must be a multiple of 3".into()));
        }
        let l = 3.0 * H;
        let disc = build_discretization(Rect::square(0.0, l)?, (elems, elems), degree)?;
        let dirichlet = disc.boundary_mask();
        let mut inlet = Vec::new();
        for (d, b) in dirichlet.iter().enumerate() {
            if *b {
                let [x, y] = disc.node(d);
                let tol = 1e-12;
                let t = if y < tol {
                    x
                } else if (x - l).abs() < tol {
                    l + y
                } else if (y - l).abs() < tol {
                    3.0 * l - x
                } else {
                    4.0 * l - y
                };
                inlet.push((d, if (t - 4.0 * l).abs() < tol { 0.0 } else { t / (4.0 * l) }));
            }
        }
        let omega = build_discretization(Rect::square(H, 2.0 * H)?, (elems / 3, elems / 3), degree)?;
        let omega_dofs = (0..omega.ndofs())
            .map(|k| {
                disc.find_node(omega.node(k), 1e-12)
                    .ok_or_else(|| Error::MeshNotConforming("extracted domain not resolved".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        let gram = assemble_h1_gram(&omega);
        Ok(Self { disc, dirichlet, inlet, omega, omega_dofs, gram })
    }

    pub fn n_in(&self) -> usize {
        self.inlet.len()
    }

    pub fn arclength(&self) -> Vec<f64> {
        self.inlet.iter().map(|p| p.1).collect()
    }

    pub fn sample_mu(rng: &mut dyn RngCore) -> [f64; 4] {
        std::array::from_fn(|i| rng.random_range(P_ADR[i][0]..=P_ADR[i][1]))
    }

    /// Factorizes the transfer problem for one parameter.
    pub fn transfer(&self, mu: [f64; 4]) -> Result<LinearTransfer<'_>> {
        let form = LinearAdr { mu };
        let zero = vec![0.0; self.disc.ndofs()];
        let (_, a) = assemble_jacobian(&self.disc, &form, &RotoTranslation::identity(), &zero)?;
        let mut ae = a.clone();
        let free: Vec<bool> = self.dirichlet.iter().map(|d| !d).collect();
        ae.eliminate(&free);
        let lu = SparseLu::factor(&ae)?;
        Ok(LinearTransfer { setup: self, a, lu, free })
    }
}

/// Factored transfer operator for one parameter value.
pub struct LinearTransfer<'a> {
    setup: &'a LinearSetup,
    a: SparseMatrix,
    lu: SparseLu,
    free: Vec<bool>,
}

impl LinearTransfer<'_> {
    /// Full solution for inlet values `g`.
    pub fn solve(&self, g: &[f64]) -> Result<Vec<f64>> {
        let s = self.setup;
        if g.len() != s.n_in() {
            return Err(Error::DimensionMismatch("boundary data length".into()));
        }
        let mut lift = vec![0.0; s.disc.ndofs()];
        for ((d, _), v) in s.inlet.iter().zip(g) {
            lift[*d] = *v;
        }
        let mut rhs = self.a.matvec(&lift);
        for (r, f) in rhs.iter_mut().zip(&self.free) {
            *r = if *f { -*r } else { 0.0 };
        }
        let du = self.lu.solve(&rhs)?;
        Ok(lift.iter().zip(&du).map(|(a, b)| a + b).collect())
    }

    /// Solution restricted to the extracted domain.
    pub fn apply(&self, g: &[f64]) -> Result<Vec<f64>> {
        let u = self.solve(g)?;
        Ok(self.setup.omega_dofs.iter().map(|d| u[*d]).collect())
    }

    /// Column `j` is the transfer image of the `j`-th boundary nodal function.
    pub fn matrix(&self) -> Result<DMatrix<f64>> {
        let n_in = self.setup.n_in();
        let mut t = DMatrix::zeros(self.setup.omega.ndofs(), n_in);
        let mut e = vec![0.0; n_in];
        for j in 0..n_in {
            e[j] = 1.0;
            t.set_column(j, &DVector::from_vec(self.apply(&e)?));
            e[j] = 0.0;
        }
        Ok(t)
    }
}

/// Draws `count` transfer snapshots of the linear problem.
pub fn linear_snapshots(
    setup: &LinearSetup,
    kind: SamplerKind,
    count: usize,
    n_f: usize,
    alpha: f64,
    rng: &mut dyn RngCore,
) -> Result<DMatrix<f64>> {
    let s = setup.arclength();
    let draws: Vec<([f64; 4], Vec<f64>)> = (0..count)
        .map(|_| {
            let mu = LinearSetup::sample_mu(rng);
            let g = match kind {
                SamplerKind::Smooth => sample_fourier_bc(&s, n_f, alpha, rng),
                SamplerKind::Gaussian => sample_gaussian_bc(Archetype::Int, &s, None, rng),
            };
            (mu, g.values)
        })
        .collect();
    let cols = draws
        .par_iter()
        .map(|(mu, g)| setup.transfer(*mu)?.apply(g).map(DVector::from_vec))
        .collect::<Result<Vec<_>>>()?;
    Ok(if cols.is_empty() { DMatrix::zeros(setup.omega.ndofs(), 0) } else { DMatrix::from_columns(&cols) })
}

/// Output of [`te_pod_baseline`].
#[derive(Debug, Clone)]
pub struct TePod {
    pub modes: DMatrix<f64>,
    /// Transfer singular values per training parameter, descending.
    pub singular_values: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub solves: usize,
}

/// Per-parameter transfer-eigenvalue spaces (left singular vectors of the
/// transfer matrix in the extracted-domain H1 norm, scaled by the singular
/// values, `n` per parameter) combined by POD.
pub fn te_pod_baseline(setup: &LinearSetup, p_train: &[[f64; 4]], n: usize) -> Result<TePod> {
    let k = setup.gram.to_dense();
    let chol = nalgebra::Cholesky::new(k).ok_or(Error::IndefiniteGram)?;
    let l = chol.l();
    let per: Vec<(DMatrix<f64>, Vec<f64>)> = p_train
        .par_iter()
        .map(|mu| -> Result<(DMatrix<f64>, Vec<f64>)> {
            let t = setup.transfer(*mu)?.matrix()?;
            let svd = (l.transpose() * &t).svd(true, false);
            let u = svd.u.as_ref().expect("left singular vectors");
            let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
            order.sort_by(|a, b| svd.singular_values[*b].total_cmp(&svd.singular_values[*a]));
            let sv: Vec<f64> = order.iter().map(|i| svd.singular_values[*i]).collect();
            let keep = n.min(sv.len());
            let mut cols = DMatrix::zeros(t.nrows(), keep);
            for (c, i) in order.iter().take(keep).enumerate() {
                let y = u.column(*i) * svd.singular_values[*i];
                let x = l.transpose().solve_upper_triangular(&y).expect("triangular solve");
                cols.set_column(c, &x);
            }
            Ok((cols, sv))
        })
        .collect::<Result<Vec<_>>>()?;
    let total: usize = per.iter().map(|p| p.0.ncols()).sum();
    let mut all = DMatrix::zeros(setup.omega.ndofs(), total);
    let mut c = 0;
    for (m, _) in &per {
        all.columns_mut(c, m.ncols()).copy_from(m);
        c += m.ncols();
    }
    let p = pod(&all, &setup.gram, n.min(total))?;
    Ok(TePod {
        modes: p.modes,
        singular_values: per.into_iter().map(|p| p.1).collect(),
        eigenvalues: p.eigenvalues,
        solves: p_train.len() * setup.n_in(),
    })
}

/// Guard used by operations restricted to linear problems.
pub fn require_linear(form: &dyn crate::fem::WeakForm, what: &str) -> Result<()> {
    if form.is_linear() {
        Ok(())
    } else {
        Err(Error::LinearModelOnly(what.into()))
    }
}

