//! Element loops for residuals, Jacobians and Gram matrices.
//!
//! A weak form is described pointwise by `eta(u, v) = F(u, grad u) . grad v +
//! S(u, grad u) v`. Assembly may run on a reference mesh mapped into physical
//! space by a roto-translation; the form is always evaluated with physical
//! coordinates and gradients.

use super::discretization::Discretization;
use super::map::RotoTranslation;
use crate::error::Result;
use crate::linalg::SparseMatrix;

/// Physical location of a quadrature point and the centroid of its element.
#[derive(Debug, Clone, Copy)]
pub struct PointCtx {
    pub x: [f64; 2],
    pub centroid: [f64; 2],
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Integrand {
    pub flux: [f64; 2],
    pub source: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FluxDeriv {
    pub dflux_du: [f64; 2],
    /// `dflux_dgrad[i][j] = d flux_i / d (grad u)_j`
    pub dflux_dgrad: [[f64; 2]; 2],
    pub dsource_du: f64,
    pub dsource_dgrad: [f64; 2],
}

pub trait WeakForm: Send + Sync {
    fn integrand(&self, ctx: &PointCtx, u: f64, grad: [f64; 2]) -> Result<Integrand>;

    fn linearization(&self, ctx: &PointCtx, u: f64, grad: [f64; 2]) -> Result<(Integrand, FluxDeriv)>;

    fn is_linear(&self) -> bool {
        false
    }
}

struct QuadState {
    ctx: PointCtx,
    u: f64,
    grad_ref: [f64; 2],
    w: f64,
}

fn quad_states(
    disc: &Discretization,
    map: &RotoTranslation,
    e: usize,
    ue: &[f64],
    out: &mut Vec<QuadState>,
    gx: &mut Vec<[f64; 2]>,
) {
    let t = disc.table();
    let (x0, y0, hx, hy) = disc.elem_geom(e);
    let centroid = map.apply([x0 + hx / 2.0, y0 + hy / 2.0]);
    out.clear();
    gx.clear();
    for q in 0..t.nq {
        let row = q * t.nl;
        let mut u = 0.0;
        let mut g = [0.0; 2];
        for l in 0..t.nl {
            u += t.phi[row + l] * ue[l];
            g[0] += t.dxi[row + l] * ue[l];
            g[1] += t.deta[row + l] * ue[l];
        }
        let qp = t.qpts[q];
        let xr = [x0 + hx * (qp[0] + 1.0) / 2.0, y0 + hy * (qp[1] + 1.0) / 2.0];
        out.push(QuadState {
            ctx: PointCtx { x: map.apply(xr), centroid },
            u,
            grad_ref: [g[0] * 2.0 / hx, g[1] * 2.0 / hy],
            w: t.qwts[q] * hx * hy / 4.0,
        });
    }
    // reference-space gradients of the basis at each quadrature point
    for q in 0..t.nq {
        for l in 0..t.nl {
            let k = q * t.nl + l;
            gx.push([t.dxi[k] * 2.0 / hx, t.deta[k] * 2.0 / hy]);
        }
    }
}

/// `r_l = int eta(u, N_l)` over the mesh, evaluated through `map`.
pub fn assemble_residual(
    disc: &Discretization,
    form: &dyn WeakForm,
    map: &RotoTranslation,
    u: &[f64],
) -> Result<Vec<f64>> {
    assert_eq!(u.len(), disc.ndofs());
    let t = disc.table();
    let nl = t.nl;
    let mut r = vec![0.0; disc.ndofs()];
    let mut dofs = vec![0; nl];
    let mut ue = vec![0.0; nl];
    let mut qs = Vec::with_capacity(t.nq);
    let mut gb = Vec::with_capacity(t.nq * nl);
    let mut re = vec![0.0; nl];
    for e in 0..disc.n_elems() {
        disc.elem_dofs(e, &mut dofs);
        for (l, d) in dofs.iter().enumerate() {
            ue[l] = u[*d];
        }
        quad_states(disc, map, e, &ue, &mut qs, &mut gb);
        re.iter_mut().for_each(|v| *v = 0.0);
        for (q, s) in qs.iter().enumerate() {
            let it = form.integrand(&s.ctx, s.u, map.rotate(s.grad_ref))?;
            let f = map.rotate_back(it.flux);
            for l in 0..nl {
                let g = gb[q * nl + l];
                re[l] += s.w * (f[0] * g[0] + f[1] * g[1] + it.source * t.phi[q * nl + l]);
            }
        }
        for (l, d) in dofs.iter().enumerate() {
            r[*d] += re[l];
        }
    }
    Ok(r)
}

/// Residual and its Jacobian `J_lm = d r_l / d u_m`.
pub fn assemble_jacobian(
    disc: &Discretization,
    form: &dyn WeakForm,
    map: &RotoTranslation,
    u: &[f64],
) -> Result<(Vec<f64>, SparseMatrix)> {
    assert_eq!(u.len(), disc.ndofs());
    let t = disc.table();
    let nl = t.nl;
    let positions = disc.elem_positions();
    let mut jac = disc.sparsity();
    let mut r = vec![0.0; disc.ndofs()];
    let mut dofs = vec![0; nl];
    let mut ue = vec![0.0; nl];
    let mut qs = Vec::with_capacity(t.nq);
    let mut gb = Vec::with_capacity(t.nq * nl);
    let mut re = vec![0.0; nl];
    let mut ke = vec![0.0; nl * nl];
    // per-point coefficient of N_m and grad N_m in the flux / source
    let mut cf = vec![[0.0; 2]; nl];
    let mut cs = vec![0.0; nl];
    for e in 0..disc.n_elems() {
        disc.elem_dofs(e, &mut dofs);
        for (l, d) in dofs.iter().enumerate() {
            ue[l] = u[*d];
        }
        quad_states(disc, map, e, &ue, &mut qs, &mut gb);
        re.iter_mut().for_each(|v| *v = 0.0);
        ke.iter_mut().for_each(|v| *v = 0.0);
        for (q, s) in qs.iter().enumerate() {
            let (it, d) = form.linearization(&s.ctx, s.u, map.rotate(s.grad_ref))?;
            let f = map.rotate_back(it.flux);
            let dfdu = map.rotate_back(d.dflux_du);
            let dfdg = map.pull_back_tensor(d.dflux_dgrad);
            let dsdg = map.rotate_back(d.dsource_dgrad);
            let row = q * nl;
            for m in 0..nl {
                let phi = t.phi[row + m];
                let g = gb[row + m];
                cf[m] = [
                    dfdu[0] * phi + dfdg[0][0] * g[0] + dfdg[0][1] * g[1],
                    dfdu[1] * phi + dfdg[1][0] * g[0] + dfdg[1][1] * g[1],
                ];
                cs[m] = d.dsource_du * phi + dsdg[0] * g[0] + dsdg[1] * g[1];
            }
            for l in 0..nl {
                let gl = gb[row + l];
                let pl = t.phi[row + l];
                re[l] += s.w * (f[0] * gl[0] + f[1] * gl[1] + it.source * pl);
                let kr = &mut ke[l * nl..(l + 1) * nl];
                for m in 0..nl {
                    kr[m] += s.w * (cf[m][0] * gl[0] + cf[m][1] * gl[1] + cs[m] * pl);
                }
            }
        }
        for (l, d) in dofs.iter().enumerate() {
            r[*d] += re[l];
        }
        let base = e * nl * nl;
        let vals = jac.values_mut();
        for k in 0..nl * nl {
            vals[positions[base + k] as usize] += ke[k];
        }
    }
    Ok((r, jac))
}

/// Gram matrix of `v -> int |grad(w v)|^2 + (w v)^2` with `w` a nodal weight
/// field (unit weight when `None`), products evaluated at quadrature points.
pub fn assemble_weighted_h1_gram(disc: &Discretization, weight: Option<&[f64]>) -> SparseMatrix {
    gram_impl(disc, weight, 1.0, 1.0)
}

/// Unweighted `H^1` Gram matrix.
pub fn assemble_h1_gram(disc: &Discretization) -> SparseMatrix {
    gram_impl(disc, None, 1.0, 1.0)
}

/// Gram matrix of the `H^1` seminorm `int |grad v|^2`.
pub fn assemble_h1_seminorm_gram(disc: &Discretization) -> SparseMatrix {
    gram_impl(disc, None, 1.0, 0.0)
}

/// `L^2` mass matrix.
pub fn assemble_mass(disc: &Discretization) -> SparseMatrix {
    gram_impl(disc, None, 0.0, 1.0)
}

fn gram_impl(disc: &Discretization, weight: Option<&[f64]>, cg: f64, cm: f64) -> SparseMatrix {
    let t = disc.table();
    let nl = t.nl;
    let positions = disc.elem_positions();
    let mut gram = disc.sparsity();
    let mut dofs = vec![0; nl];
    let mut ke = vec![0.0; nl * nl];
    let mut vals_q = vec![0.0; nl];
    let mut grads_q = vec![[0.0; 2]; nl];
    for e in 0..disc.n_elems() {
        disc.elem_dofs(e, &mut dofs);
        let (_, _, hx, hy) = disc.elem_geom(e);
        let jw = hx * hy / 4.0;
        ke.iter_mut().for_each(|v| *v = 0.0);
        for q in 0..t.nq {
            let row = q * nl;
            let (w, gw) = match weight {
                None => (1.0, [0.0, 0.0]),
                Some(wt) => {
                    let mut w = 0.0;
                    let mut g = [0.0; 2];
                    for l in 0..nl {
                        let c = wt[dofs[l]];
                        w += t.phi[row + l] * c;
                        g[0] += t.dxi[row + l] * c;
                        g[1] += t.deta[row + l] * c;
                    }
                    (w, [g[0] * 2.0 / hx, g[1] * 2.0 / hy])
                }
            };
            for l in 0..nl {
                let phi = t.phi[row + l];
                let g = [t.dxi[row + l] * 2.0 / hx, t.deta[row + l] * 2.0 / hy];
                // grad(w N) = w grad N + N grad w
                vals_q[l] = w * phi;
                grads_q[l] = [w * g[0] + phi * gw[0], w * g[1] + phi * gw[1]];
            }
            let wq = t.qwts[q] * jw;
            for l in 0..nl {
                for m in 0..nl {
                    ke[l * nl + m] += wq
                        * (cg * (grads_q[l][0] * grads_q[m][0] + grads_q[l][1] * grads_q[m][1])
                            + cm * vals_q[l] * vals_q[m]);
                }
            }
        }
        let base = e * nl * nl;
        let vals = gram.values_mut();
        for k in 0..nl * nl {
            vals[positions[base + k] as usize] += ke[k];
        }
    }
    gram
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::discretization::{build_discretization, Rect};

    struct Poisson;
    impl WeakForm for Poisson {
        fn integrand(&self, ctx: &PointCtx, _u: f64, g: [f64; 2]) -> Result<Integrand> {
            Ok(Integrand { flux: g, source: -ctx.x[0] })
        }
        fn linearization(&self, ctx: &PointCtx, u: f64, g: [f64; 2]) -> Result<(Integrand, FluxDeriv)> {
            let d = FluxDeriv { dflux_dgrad: [[1.0, 0.0], [0.0, 1.0]], ..Default::default() };
            Ok((self.integrand(ctx, u, g)?, d))
        }
        fn is_linear(&self) -> bool {
            true
        }
    }

    // anisotropic, state-dependent form to exercise rotations
    struct Aniso;
    impl WeakForm for Aniso {
        fn integrand(&self, ctx: &PointCtx, u: f64, g: [f64; 2]) -> Result<Integrand> {
            let k = 1.0 + u * u;
            Ok(Integrand {
                flux: [k * (2.0 * g[0] + 0.3 * g[1]), k * g[1]],
                source: u * g[0] - ctx.x[1],
            })
        }
        fn linearization(&self, ctx: &PointCtx, u: f64, g: [f64; 2]) -> Result<(Integrand, FluxDeriv)> {
            let k = 1.0 + u * u;
            let dk = 2.0 * u;
            let d = FluxDeriv {
                dflux_du: [dk * (2.0 * g[0] + 0.3 * g[1]), dk * g[1]],
                dflux_dgrad: [[2.0 * k, 0.3 * k], [0.0, k]],
                dsource_du: g[0],
                dsource_dgrad: [u, 0.0],
            };
            Ok((self.integrand(ctx, u, g)?, d))
        }
    }

    #[test]
    fn gram_examples() {
        let d = build_discretization(Rect::square(0.0, 1.0).unwrap(), (2, 3), 2).unwrap();
        let g = assemble_h1_gram(&d);
        let one = vec![1.0; d.ndofs()];
        assert!((g.quad_form(&one) - 1.0).abs() < 1e-13);
        let x1 = d.interpolate(|x| x[0]);
        assert!((g.quad_form(&x1) - 4.0 / 3.0).abs() < 1e-13);
        assert!(g.relative_asymmetry() < 1e-13);
        // weight x1 on the constant field equals the plain norm of x1
        let gw = assemble_weighted_h1_gram(&d, Some(&x1));
        assert!((gw.quad_form(&one) - 4.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn jacobian_matches_finite_differences_under_rotation() {
        let d = build_discretization(Rect::new(0.0, 0.0, 1.0, 0.5).unwrap(), (2, 2), 3).unwrap();
        let u: Vec<f64> = (0..d.ndofs()).map(|i| ((i * 7 % 11) as f64) / 11.0).collect();
        for k in 0..4 {
            let map = RotoTranslation::new(k, [0.5, 0.25], [2.0, 1.0]);
            let (r, j) = assemble_jacobian(&d, &Aniso, &map, &u).unwrap();
            let r2 = assemble_residual(&d, &Aniso, &map, &u).unwrap();
            for (a, b) in r.iter().zip(&r2) {
                assert!((a - b).abs() < 1e-14);
            }
            let jd = j.to_dense();
            let h = 1e-6;
            for m in [0, 5, 17, 40] {
                let mut up = u.clone();
                let mut um = u.clone();
                up[m] += h;
                um[m] -= h;
                let rp = assemble_residual(&d, &Aniso, &map, &up).unwrap();
                let rm = assemble_residual(&d, &Aniso, &map, &um).unwrap();
                for l in 0..d.ndofs() {
                    let fd = (rp[l] - rm[l]) / (2.0 * h);
                    assert!((fd - jd[(l, m)]).abs() < 1e-7 * (1.0 + fd.abs()), "k={k} l={l} m={m}");
                }
            }
        }
    }

    #[test]
    fn isotropic_residual_is_rotation_invariant() {
        // reference mesh symmetric about its center: rotating the frame
        // permutes nothing for an isotropic form without position dependence
        let d = build_discretization(Rect::square(0.0, 1.0).unwrap(), (2, 2), 2).unwrap();
        let u = d.interpolate(|x| x[0] * x[0] + 0.5 * x[1]);
        let id = RotoTranslation::identity();
        let r0 = assemble_residual(&d, &Poisson, &id, &u).unwrap();
        let rot = RotoTranslation::new(2, [0.5, 0.5], [0.5, 0.5]);
        let r2 = assemble_residual(&d, &Poisson, &rot, &u).unwrap();
        // fluxes are identical; only the source sees the mapped coordinates
        let s0 = assemble_residual(&d, &Poisson, &id, &vec![0.0; d.ndofs()]).unwrap();
        let s2 = assemble_residual(&d, &Poisson, &rot, &vec![0.0; d.ndofs()]).unwrap();
        for i in 0..d.ndofs() {
            assert!(((r0[i] - s0[i]) - (r2[i] - s2[i])).abs() < 1e-13);
        }
    }
}
