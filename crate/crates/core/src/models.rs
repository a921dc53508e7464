//! PDE models exposed through [`WeakForm`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{FluxDeriv, Integrand, PointCtx, WeakForm};

/// Local parameter box for `(mu1, mu2)` of the nonlinear permeability.
pub const P_HAT: [[f64; 2]; 2] = [[0.1, 0.2], [30.0, 40.0]];
/// Box for `(mu1, mu2, mu3, mu4)` of the advection-diffusion-reaction model.
pub const P_ADR: [[f64; 2]; 4] = [[0.2, 1.0], [-1.0, 1.0], [-1.0, 1.0], [0.0, 1.0]];

pub const SOURCE_AMP: f64 = 100.0;
pub const SOURCE_DECAY: f64 = 50.0;

/// `kappa(u) = 36/mu2 (u(1-u) / (u^3 + 12/mu2 (1-u)^3))^2 + mu1` and its
/// derivative in `u`.
pub fn kappa(u: f64, mu1: f64, mu2: f64) -> Result<(f64, f64)> {
    let c = 12.0 / mu2;
    let v = 1.0 - u;
    let q = u * v;
    let den = u * u * u + c * v * v * v;
    if den.abs() < 1e-14 || !den.is_finite() {
        return Err(Error::DenominatorUnderflow { u });
    }
    let rho = q / den;
    let dq = 1.0 - 2.0 * u;
    let dden = 3.0 * u * u - 3.0 * c * v * v;
    let drho = (dq * den - q * dden) / (den * den);
    Ok((36.0 / mu2 * rho * rho + mu1, 72.0 / mu2 * rho * drho))
}

/// Row-major grid of square subdomains of side `h` starting at `origin`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubdomainGrid {
    pub origin: [f64; 2],
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
}

impl SubdomainGrid {
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_center(&self, c: usize) -> [f64; 2] {
        let (i, j) = (c % self.nx, c / self.nx);
        [
            self.origin[0] + (i as f64 + 0.5) * self.h,
            self.origin[1] + (j as f64 + 0.5) * self.h,
        ]
    }

    /// Cell containing `p`, clamped to the grid.
    pub fn cell_of(&self, p: [f64; 2]) -> usize {
        let idx = |t: f64, n: usize| -> usize { (t / self.h).floor().clamp(0.0, n as f64 - 1.0) as usize };
        idx(p[0] - self.origin[0], self.nx) + idx(p[1] - self.origin[1], self.ny) * self.nx
    }

    /// Closed-cell membership.
    pub fn contains(&self, c: usize, p: [f64; 2]) -> bool {
        let ctr = self.cell_center(c);
        let tol = 1e-12 * self.h;
        (p[0] - ctr[0]).abs() <= self.h / 2.0 + tol && (p[1] - ctr[1]).abs() <= self.h / 2.0 + tol
    }
}

/// `f(x; i_star) = 100 exp(-50 |x - x_c|^2)` on the closed cell `i_star`
/// (one-based, `0` meaning no source), with `x_c` the cell centroid.
pub fn source(grid: &SubdomainGrid, x: [f64; 2], i_star: usize) -> f64 {
    if i_star == 0 || i_star > grid.n_cells() || !grid.contains(i_star - 1, x) {
        return 0.0;
    }
    gaussian_bump(x, grid.cell_center(i_star - 1))
}

fn gaussian_bump(x: [f64; 2], c: [f64; 2]) -> f64 {
    let d2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
    SOURCE_AMP * (-SOURCE_DECAY * d2).exp()
}

/// `-div(kappa(u) grad u) = f` with per-subdomain `(mu1, mu2)`.
///
/// Each element takes the parameters and the source indicator of the cell
/// holding its centroid, so meshes must resolve the cell boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearDiffusion {
    pub grid: SubdomainGrid,
    pub params: Vec<[f64; 2]>,
    /// zero-based source cell
    pub source: Option<usize>,
}

impl NonlinearDiffusion {
    pub fn new(grid: SubdomainGrid, params: Vec<[f64; 2]>, source: Option<usize>) -> Result<Self> {
        if params.len() != grid.n_cells() {
            return Err(Error::DimensionMismatch(format!(
                "{} parameter pairs for {} subdomains",
                params.len(),
                grid.n_cells()
            )));
        }
        if source.is_some_and(|s| s >= grid.n_cells()) {
            return Err(Error::InvalidInput("source index outside the grid".into()));
        }
        Ok(Self { grid, params, source })
    }

    fn load(&self, ctx: &PointCtx, cell: usize) -> f64 {
        match self.source {
            Some(s) if s == cell => gaussian_bump(ctx.x, self.grid.cell_center(s)),
            _ => 0.0,
        }
    }
}

impl WeakForm for NonlinearDiffusion {
    fn integrand(&self, ctx: &PointCtx, u: f64, g: [f64; 2]) -> Result<Integrand> {
        let cell = self.grid.cell_of(ctx.centroid);
        let [m1, m2] = self.params[cell];
        let (k, _) = kappa(u, m1, m2)?;
        Ok(Integrand {
            flux: [k * g[0], k * g[1]],
            source: -self.load(ctx, cell),
        })
    }

    fn linearization(&self, ctx: &PointCtx, u: f64, g: [f64; 2]) -> Result<(Integrand, FluxDeriv)> {
        let cell = self.grid.cell_of(ctx.centroid);
        let [m1, m2] = self.params[cell];
        let (k, dk) = kappa(u, m1, m2)?;
        Ok((
            Integrand {
                flux: [k * g[0], k * g[1]],
                source: -self.load(ctx, cell),
            },
            FluxDeriv {
                dflux_du: [dk * g[0], dk * g[1]],
                dflux_dgrad: [[k, 0.0], [0.0, k]],
                ..Default::default()
            },
        ))
    }
}

/// `kappa(x) = 1 / (1 + |x|^2)`
pub fn adr_kappa(x: [f64; 2]) -> f64 {
    1.0 / (1.0 + x[0] * x[0] + x[1] * x[1])
}

/// `-div(mu1 kappa grad u + b u) + mu4 u = 0` with `b = (mu2, mu3)`.
///
/// Since `b` is constant, `-div(b u) = -b . grad u` and the advection term is
/// kept in that convective form: the weak integrand is
/// `mu1 kappa grad u . grad v - (b . grad u) v + mu4 u v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearAdr {
    pub mu: [f64; 4],
}

/// Pointwise weak-form integrand of [`LinearAdr`] for state `w` and test `v`.
pub fn adr_integrand(w: f64, grad_w: [f64; 2], v: f64, grad_v: [f64; 2], x: [f64; 2], mu: [f64; 4]) -> f64 {
    let k = mu[0] * adr_kappa(x);
    k * (grad_w[0] * grad_v[0] + grad_w[1] * grad_v[1]) - (mu[1] * grad_w[0] + mu[2] * grad_w[1]) * v
        + mu[3] * w * v
}

impl WeakForm for LinearAdr {
    fn integrand(&self, ctx: &PointCtx, u: f64, g: [f64; 2]) -> Result<Integrand> {
        let k = self.mu[0] * adr_kappa(ctx.x);
        Ok(Integrand {
            flux: [k * g[0], k * g[1]],
            source: -(self.mu[1] * g[0] + self.mu[2] * g[1]) + self.mu[3] * u,
        })
    }

    fn linearization(&self, ctx: &PointCtx, u: f64, g: [f64; 2]) -> Result<(Integrand, FluxDeriv)> {
        let k = self.mu[0] * adr_kappa(ctx.x);
        Ok((
            self.integrand(ctx, u, g)?,
            FluxDeriv {
                dflux_dgrad: [[k, 0.0], [0.0, k]],
                dsource_du: self.mu[3],
                dsource_dgrad: [-self.mu[1], -self.mu[2]],
                ..Default::default()
            },
        ))
    }

    fn is_linear(&self) -> bool {
        true
    }
}

/// Symmetric diffusion-reaction problem `a(u, v) = f(v)` with
/// `a(u, v) = int mu1 kappa grad u . grad v + mu4 u v` and a Gaussian load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearCoercive {
    pub mu1: f64,
    pub mu4: f64,
    pub load_center: [f64; 2],
    pub load_amp: f64,
    pub load_decay: f64,
}

impl LinearCoercive {
    pub fn new(mu1: f64, mu4: f64, load_center: [f64; 2]) -> Self {
        Self {
            mu1,
            mu4,
            load_center,
            load_amp: SOURCE_AMP,
            load_decay: SOURCE_DECAY,
        }
    }

    fn load(&self, x: [f64; 2]) -> f64 {
        let d2 = (x[0] - self.load_center[0]).powi(2) + (x[1] - self.load_center[1]).powi(2);
        self.load_amp * (-self.load_decay * d2).exp()
    }

    /// The bilinear part alone (zero load), whose Jacobian is the energy Gram.
    pub fn bilinear(&self) -> LinearCoercive {
        Self { load_amp: 0.0, ..*self }
    }
}

impl WeakForm for LinearCoercive {
    fn integrand(&self, ctx: &PointCtx, u: f64, g: [f64; 2]) -> Result<Integrand> {
        let k = self.mu1 * adr_kappa(ctx.x);
        Ok(Integrand {
            flux: [k * g[0], k * g[1]],
            source: self.mu4 * u - self.load(ctx.x),
        })
    }

    fn linearization(&self, ctx: &PointCtx, u: f64, g: [f64; 2]) -> Result<(Integrand, FluxDeriv)> {
        let k = self.mu1 * adr_kappa(ctx.x);
        Ok((
            self.integrand(ctx, u, g)?,
            FluxDeriv {
                dflux_dgrad: [[k, 0.0], [0.0, k]],
                dsource_du: self.mu4,
                ..Default::default()
            },
        ))
    }

    fn is_linear(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kappa_examples() {
        assert_eq!(kappa(0.0, 0.1, 30.0).unwrap().0, 0.1);
        assert_eq!(kappa(1.0, 0.2, 40.0).unwrap().0, 0.2);
        let expect = (0.25f64 / 0.175).powi(2) * 1.2 + 0.1;
        assert!((kappa(0.5, 0.1, 30.0).unwrap().0 - expect).abs() < 1e-14);
        assert!((expect - 2.548979).abs() < 1e-6);
    }

    #[test]
    fn kappa_underflow_detected() {
        // u^3 + c (1-u)^3 = 0 at u = -c^{1/3} / (1 - c^{1/3})
        let c: f64 = 12.0 / 30.0;
        let r = c.cbrt();
        let u = -r / (1.0 - r);
        assert!(matches!(kappa(u, 0.1, 30.0), Err(Error::DenominatorUnderflow { .. })));
    }

    #[test]
    fn source_examples() {
        let grid = SubdomainGrid { origin: [0.0, 0.0], h: 0.1, nx: 3, ny: 3 };
        let c = grid.cell_center(4);
        assert_eq!(source(&grid, c, 5), 100.0);
        assert_eq!(source(&grid, c, 0), 0.0);
        // outside the source cell
        assert_eq!(source(&grid, [0.01, 0.01], 5), 0.0);
        let p = [c[0] + 0.05, c[1] + 0.05];
        let dist2: f64 = 0.005;
        assert!((source(&grid, p, 5) - 100.0 * (-50.0 * dist2).exp()).abs() < 1e-12);
        let q = [c[0] + 0.06, c[1] + 0.08];
        assert_eq!(source(&grid, q, 5), 0.0);
        // distance 0.1 from the centroid is outside the cell along an axis,
        // so test the closed-form value directly
        assert!((gaussian_bump([c[0] + 0.1, c[1]], c) - 60.653065971).abs() < 1e-8);
    }

    #[test]
    fn adr_integrand_examples() {
        assert_eq!(adr_integrand(3.0, [0.0, 0.0], 1.0, [0.4, 0.2], [0.1, 0.2], [0.5, 0.0, 0.0, 0.0]), 0.0);
        let x = [0.1, 0.2];
        let (w, gw) = (0.7, [0.3, -0.4]);
        let val = adr_integrand(w, gw, w, gw, x, [1.0, 0.0, 0.0, 1.0]);
        assert!((val - (adr_kappa(x) * 0.25 + 0.49)).abs() < 1e-15);
        // w = x1, v = x2 at the origin with unit advection along x1
        let val = adr_integrand(0.0, [1.0, 0.0], 0.0, [0.0, 1.0], [0.0, 0.0], [1.0, 1.0, 0.0, 0.0]);
        assert_eq!(val, 0.0);
        let val = adr_integrand(0.0, [1.0, 0.0], 0.5, [0.0, 1.0], [0.0, 0.0], [1.0, 1.0, 0.0, 0.0]);
        assert_eq!(val, -0.5);
    }
}
