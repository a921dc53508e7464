use serde::{Deserialize, Serialize};

use super::assembly::{assemble_jacobian, assemble_residual, FluxDeriv, Integrand, PointCtx, WeakForm};
use super::discretization::Discretization;
use super::map::RotoTranslation;
use crate::error::{Error, Result};
use crate::linalg::{norm2, LuCache, SparseLu, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewtonSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_iter: usize,
    /// Backtracking line search (halving up to 8 times).
    pub damping: bool,
    /// After a failed solve from the initial state, retry by ramping the
    /// Dirichlet data and the source term from zero.
    pub continuation: bool,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_iter: 25,
            damping: true,
            continuation: true,
        }
    }
}

impl NewtonSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) || self.max_iter == 0 {
            return Err(Error::Config(
                "Newton tolerances must be positive and max_iter at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct NewtonReport {
    pub iterations: usize,
    /// Euclidean residual norms, starting with the initial state.
    pub history: Vec<f64>,
}

pub trait NonlinearSystem {
    fn residual(&self, u: &[f64]) -> Result<Vec<f64>>;
    fn linearize(&self, u: &[f64]) -> Result<(Vec<f64>, SparseMatrix)>;
}

const MAX_HALVINGS: usize = 8;

/// Damped Newton iteration. Stops when `|r| <= abs_tol` or
/// `|r| <= rel_tol * |r_0|`.
pub fn newton<S: NonlinearSystem + ?Sized>(
    sys: &S,
    u0: Vec<f64>,
    settings: &NewtonSettings,
) -> Result<(Vec<f64>, NewtonReport)> {
    settings.validate()?;
    let mut u = u0;
    let (mut r, mut jac) = sys.linearize(&u)?;
    let mut rn = norm2(&r);
    let r0 = rn;
    let mut history = vec![rn];
    let mut cache = LuCache::new();
    let converged = |rn: f64| rn <= settings.abs_tol || rn <= settings.rel_tol * r0;
    if !rn.is_finite() {
        return Err(Error::SingularJacobian("non-finite initial residual".into()));
    }
    let mut it = 0;
    while !converged(rn) {
        if it == settings.max_iter {
            return Err(Error::NonConvergence {
                iterations: it,
                last_residual: rn,
                history,
                last_iterate: u,
                context: String::new(),
            });
        }
        it += 1;
        let lu = SparseLu::factor_cached(&jac, &mut cache)?;
        let du = lu.solve(&r)?;
        let mut lambda = 1.0;
        let mut accepted = None;
        let mut fallback = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = u.iter().zip(&du).map(|(a, b)| a - lambda * b).collect();
            match sys.residual(&trial) {
                Ok(rt) => {
                    let tn = norm2(&rt);
                    if tn.is_finite() && (!settings.damping || tn < rn) {
                        accepted = Some(trial);
                        break;
                    }
                    if tn.is_finite() {
                        fallback = Some(trial);
                    }
                }
                Err(e) if !settings.damping => return Err(e),
                Err(_) => {}
            }
            if !settings.damping {
                break;
            }
            lambda *= 0.5;
        }
        u = match accepted.or(fallback) {
            Some(t) => t,
            None => {
                return Err(Error::NonConvergence {
                    iterations: it,
                    last_residual: rn,
                    history,
                    last_iterate: u,
                    context: "line search found no admissible state".into(),
                })
            }
        };
        let lin = sys.linearize(&u)?;
        r = lin.0;
        jac = lin.1;
        rn = norm2(&r);
        history.push(rn);
    }
    Ok((u, NewtonReport { iterations: it, history }))
}

/// A weak form on a (possibly mapped) discretization with the DOFs outside
/// `free` held at their values in `base`.
pub struct FieldProblem<'a> {
    pub disc: &'a Discretization,
    pub form: &'a dyn WeakForm,
    pub map: RotoTranslation,
    pub free: Vec<bool>,
}

impl<'a> FieldProblem<'a> {
    fn mask_residual(&self, r: &mut [f64]) {
        for (ri, f) in r.iter_mut().zip(&self.free) {
            if !f {
                *ri = 0.0;
            }
        }
    }
}

impl NonlinearSystem for FieldProblem<'_> {
    fn residual(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut r = assemble_residual(self.disc, self.form, &self.map, u)?;
        self.mask_residual(&mut r);
        Ok(r)
    }

    fn linearize(&self, u: &[f64]) -> Result<(Vec<f64>, SparseMatrix)> {
        let (mut r, mut j) = assemble_jacobian(self.disc, self.form, &self.map, u)?;
        self.mask_residual(&mut r);
        j.eliminate(&self.free);
        Ok((r, j))
    }
}

/// The form with its source part multiplied by `t`.
struct ScaledSource<'a> {
    inner: &'a dyn WeakForm,
    t: f64,
}

impl WeakForm for ScaledSource<'_> {
    fn integrand(&self, ctx: &PointCtx, u: f64, g: [f64; 2]) -> Result<Integrand> {
        let mut i = self.inner.integrand(ctx, u, g)?;
        i.source *= self.t;
        Ok(i)
    }

    fn linearization(&self, ctx: &PointCtx, u: f64, g: [f64; 2]) -> Result<(Integrand, FluxDeriv)> {
        let (mut i, mut d) = self.inner.linearization(ctx, u, g)?;
        i.source *= self.t;
        d.dsource_du *= self.t;
        d.dsource_dgrad = d.dsource_dgrad.map(|v| v * self.t);
        Ok((i, d))
    }

    fn is_linear(&self) -> bool {
        self.inner.is_linear()
    }
}

const MIN_STEP: f64 = 1.0 / 256.0;

/// Solves `int eta(u, v) = 0` for all `v` vanishing on the masked DOFs, with
/// `u = g_dir` there. `init` (zero when `None`) supplies the other DOFs.
///
/// If Newton fails and `settings.continuation` is set, the data are ramped
/// as `t g_dir`, `t f` from the zero state with adaptive steps in `t`.
pub fn solve_nonlinear(
    disc: &Discretization,
    form: &dyn WeakForm,
    dirichlet: &[bool],
    g_dir: &[f64],
    settings: &NewtonSettings,
    init: Option<&[f64]>,
) -> Result<(Vec<f64>, NewtonReport)> {
    let n = disc.ndofs();
    if dirichlet.len() != n || g_dir.len() != n || init.is_some_and(|v| v.len() != n) {
        return Err(Error::DimensionMismatch("field length differs from DOF count".into()));
    }
    let u0 = init.map_or_else(|| vec![0.0; n], |v| v.to_vec());
    let first = solve_scaled(disc, form, dirichlet, g_dir, settings, u0, 1.0);
    match first {
        Err(e) if settings.continuation && e.is_solver_failure() && !form.is_linear() => {
            log::debug!("Newton failed ({e}); switching to continuation");
            continuation(disc, form, dirichlet, g_dir, settings).map_err(|_| e)
        }
        r => r,
    }
}

fn continuation(
    disc: &Discretization,
    form: &dyn WeakForm,
    dirichlet: &[bool],
    g_dir: &[f64],
    settings: &NewtonSettings,
) -> Result<(Vec<f64>, NewtonReport)> {
    let mut u = vec![0.0; disc.ndofs()];
    let mut t = 0.0;
    let mut dt: f64 = 0.25;
    let mut report = NewtonReport::default();
    while t < 1.0 {
        let next = (t + dt).min(1.0);
        match solve_scaled(disc, form, dirichlet, g_dir, settings, u.clone(), next) {
            Ok((v, rep)) => {
                u = v;
                t = next;
                report.iterations += rep.iterations;
                report.history = rep.history;
                dt *= 1.5;
            }
            Err(e) if e.is_solver_failure() && dt > MIN_STEP => dt /= 2.0,
            Err(e) => return Err(e),
        }
    }
    Ok((u, report))
}

fn solve_scaled(
    disc: &Discretization,
    form: &dyn WeakForm,
    dirichlet: &[bool],
    g_dir: &[f64],
    settings: &NewtonSettings,
    mut u0: Vec<f64>,
    t: f64,
) -> Result<(Vec<f64>, NewtonReport)> {
    let n = disc.ndofs();
    for i in 0..n {
        if dirichlet[i] {
            u0[i] = t * g_dir[i];
        }
    }
    let scaled = ScaledSource { inner: form, t };
    let prob = FieldProblem {
        disc,
        form: if t == 1.0 { form } else { &scaled },
        map: RotoTranslation::identity(),
        free: dirichlet.iter().map(|d| !d).collect(),
    };
    let (mut u, rep) = newton(&prob, u0, settings)?;
    for i in 0..n {
        if dirichlet[i] {
            u[i] = t * g_dir[i];
        }
    }
    Ok((u, rep))
}
