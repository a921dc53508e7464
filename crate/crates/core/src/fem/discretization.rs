use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use super::quadrature::{gauss_legendre, gauss_lobatto, lagrange};
use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        if !(x1 > x0) || !(y1 > y0) || !(x0.is_finite() && y0.is_finite() && x1.is_finite() && y1.is_finite()) {
            return Err(Error::DegenerateRectangle);
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    pub fn square(a: f64, b: f64) -> Result<Self> {
        Self::new(a, a, b, b)
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn contains(&self, p: [f64; 2], tol: f64) -> bool {
        p[0] >= self.x0 - tol && p[0] <= self.x1 + tol && p[1] >= self.y0 - tol && p[1] <= self.y1 + tol
    }
}

/// Basis and quadrature tables on the reference square, shared by all
/// elements of a discretization.
#[derive(Debug, Clone)]
pub struct ElementTable {
    /// local nodes per element, `(p+1)^2`
    pub nl: usize,
    /// quadrature points per element
    pub nq: usize,
    /// reference quadrature coordinates in [-1,1]^2
    pub qpts: Vec<[f64; 2]>,
    pub qwts: Vec<f64>,
    /// `phi[q * nl + l]`
    pub phi: Vec<f64>,
    pub dxi: Vec<f64>,
    pub deta: Vec<f64>,
    /// derivatives of the basis at the element's own GLL nodes,
    /// `node_dxi[k * nl + l]`
    pub node_dxi: Vec<f64>,
    pub node_deta: Vec<f64>,
}

/// Structured tensor-product Q_p mesh with Gauss-Lobatto-Legendre nodes.
///
/// Global node `(ix, iy)` has index `ix + iy * nnx`; element `(ex, ey)` has
/// index `ex + ey * nx` and local node `(a, b)` index `a + b * (p + 1)`.
#[derive(Debug)]
pub struct Discretization {
    rect: Rect,
    degree: usize,
    xb: Vec<f64>,
    yb: Vec<f64>,
    xs: Vec<f64>,
    ys: Vec<f64>,
    gll: Vec<f64>,
    table: ElementTable,
    pattern: OnceLock<SparseMatrix>,
    positions: OnceLock<Arc<Vec<u32>>>,
}

impl Clone for Discretization {
    fn clone(&self) -> Self {
        Self {
            rect: self.rect,
            degree: self.degree,
            xb: self.xb.clone(),
            yb: self.yb.clone(),
            xs: self.xs.clone(),
            ys: self.ys.clone(),
            gll: self.gll.clone(),
            table: self.table.clone(),
            pattern: OnceLock::new(),
            positions: OnceLock::new(),
        }
    }
}

/// Uniform `elems.0 x elems.1` mesh of degree `degree` on `rect`.
pub fn build_discretization(rect: Rect, elems: (usize, usize), degree: usize) -> Result<Discretization> {
    Discretization::uniform(rect, elems, degree)
}

fn check_breaks(b: &[f64]) -> Result<()> {
    if b.len() < 2 {
        return Err(Error::InvalidInput("need at least one element per direction".into()));
    }
    if b.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::DegenerateRectangle);
    }
    Ok(())
}

impl Discretization {
    pub fn uniform(rect: Rect, elems: (usize, usize), degree: usize) -> Result<Self> {
        let rect = Rect::new(rect.x0, rect.y0, rect.x1, rect.y1)?;
        if elems.0 == 0 || elems.1 == 0 {
            return Err(Error::InvalidInput("element counts must be positive".into()));
        }
        let lin = |a: f64, b: f64, n: usize| -> Vec<f64> {
            (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
        };
        Self::from_breaks(lin(rect.x0, rect.x1, elems.0), lin(rect.y0, rect.y1, elems.1), degree)
    }

    /// Tensor mesh with the given element breakpoints per direction.
    pub fn from_breaks(xb: Vec<f64>, yb: Vec<f64>, degree: usize) -> Result<Self> {
        if degree == 0 {
            return Err(Error::InvalidInput("degree must be at least 1".into()));
        }
        check_breaks(&xb)?;
        check_breaks(&yb)?;
        let rect = Rect::new(xb[0], yb[0], *xb.last().unwrap(), *yb.last().unwrap())?;
        let (gll, _) = gauss_lobatto(degree);
        let nodes_1d = |b: &[f64]| -> Vec<f64> {
            let mut out = Vec::with_capacity((b.len() - 1) * degree + 1);
            for w in b.windows(2) {
                let (a, c) = (w[0], w[1]);
                for (k, g) in gll.iter().enumerate() {
                    if k == 0 && !out.is_empty() {
                        continue;
                    }
                    out.push(if k == degree { c } else { a + (c - a) * (g + 1.0) / 2.0 });
                }
            }
            out
        };
        let xs = nodes_1d(&xb);
        let ys = nodes_1d(&yb);
        let table = Self::build_table(degree, &gll);
        Ok(Self {
            rect,
            degree,
            xb,
            yb,
            xs,
            ys,
            gll,
            table,
            pattern: OnceLock::new(),
            positions: OnceLock::new(),
        })
    }

    fn build_table(p: usize, gll: &[f64]) -> ElementTable {
        let (qx, qw) = gauss_legendre(p + 2);
        let n1 = p + 1;
        let nl = n1 * n1;
        let nq1 = qx.len();
        let nq = nq1 * nq1;
        let tab: Vec<(Vec<f64>, Vec<f64>)> = qx.iter().map(|&x| lagrange(gll, x)).collect();
        let ntab: Vec<(Vec<f64>, Vec<f64>)> = gll.iter().map(|&x| lagrange(gll, x)).collect();
        let mut qpts = Vec::with_capacity(nq);
        let mut qwts = Vec::with_capacity(nq);
        let mut phi = vec![0.0; nq * nl];
        let mut dxi = vec![0.0; nq * nl];
        let mut deta = vec![0.0; nq * nl];
        for j in 0..nq1 {
            for i in 0..nq1 {
                let q = i + j * nq1;
                qpts.push([qx[i], qx[j]]);
                qwts.push(qw[i] * qw[j]);
                for b in 0..n1 {
                    for a in 0..n1 {
                        let l = a + b * n1;
                        phi[q * nl + l] = tab[i].0[a] * tab[j].0[b];
                        dxi[q * nl + l] = tab[i].1[a] * tab[j].0[b];
                        deta[q * nl + l] = tab[i].0[a] * tab[j].1[b];
                    }
                }
            }
        }
        let mut node_dxi = vec![0.0; nl * nl];
        let mut node_deta = vec![0.0; nl * nl];
        for j in 0..n1 {
            for i in 0..n1 {
                let k = i + j * n1;
                for b in 0..n1 {
                    for a in 0..n1 {
                        let l = a + b * n1;
                        let va = if a == i { 1.0 } else { 0.0 };
                        let vb = if b == j { 1.0 } else { 0.0 };
                        node_dxi[k * nl + l] = ntab[i].1[a] * vb;
                        node_deta[k * nl + l] = va * ntab[j].1[b];
                    }
                }
            }
        }
        ElementTable { nl, nq, qpts, qwts, phi, dxi, deta, node_dxi, node_deta }
    }

    pub fn rect(&self) -> Rect {
        self.rect
    }
    pub fn degree(&self) -> usize {
        self.degree
    }
    pub fn elems(&self) -> (usize, usize) {
        (self.xb.len() - 1, self.yb.len() - 1)
    }
    pub fn n_elems(&self) -> usize {
        let (a, b) = self.elems();
        a * b
    }
    pub fn nnx(&self) -> usize {
        self.xs.len()
    }
    pub fn nny(&self) -> usize {
        self.ys.len()
    }
    pub fn ndofs(&self) -> usize {
        self.xs.len() * self.ys.len()
    }
    pub fn xs(&self) -> &[f64] {
        &self.xs
    }
    pub fn ys(&self) -> &[f64] {
        &self.ys
    }
    pub fn x_breaks(&self) -> &[f64] {
        &self.xb
    }
    pub fn y_breaks(&self) -> &[f64] {
        &self.yb
    }
    pub fn gll(&self) -> &[f64] {
        &self.gll
    }
    pub fn table(&self) -> &ElementTable {
        &self.table
    }
    /// Degree of polynomials integrated exactly per direction.
    pub fn quadrature_order(&self) -> usize {
        2 * self.degree + 3
    }

    pub fn node(&self, dof: usize) -> [f64; 2] {
        let n = self.nnx();
        [self.xs[dof % n], self.ys[dof / n]]
    }

    pub fn elem_index(&self, e: usize) -> (usize, usize) {
        let nx = self.xb.len() - 1;
        (e % nx, e / nx)
    }

    /// `(x0, y0, hx, hy)` of element `e`.
    pub fn elem_geom(&self, e: usize) -> (f64, f64, f64, f64) {
        let (ex, ey) = self.elem_index(e);
        (
            self.xb[ex],
            self.yb[ey],
            self.xb[ex + 1] - self.xb[ex],
            self.yb[ey + 1] - self.yb[ey],
        )
    }

    pub fn elem_centroid(&self, e: usize) -> [f64; 2] {
        let (x0, y0, hx, hy) = self.elem_geom(e);
        [x0 + hx / 2.0, y0 + hy / 2.0]
    }

    pub fn elem_dofs(&self, e: usize, out: &mut [usize]) {
        let (ex, ey) = self.elem_index(e);
        let p = self.degree;
        let n = self.nnx();
        for b in 0..=p {
            for a in 0..=p {
                out[a + b * (p + 1)] = (ex * p + a) + (ey * p + b) * n;
            }
        }
    }

    pub fn elem_dofs_vec(&self, e: usize) -> Vec<usize> {
        let mut v = vec![0; self.table.nl];
        self.elem_dofs(e, &mut v);
        v
    }

    /// Physical quadrature points of element `e` with weights scaled by the
    /// Jacobian determinant.
    pub fn quad_points(&self, e: usize) -> Vec<([f64; 2], f64)> {
        let (x0, y0, hx, hy) = self.elem_geom(e);
        self.table
            .qpts
            .iter()
            .zip(&self.table.qwts)
            .map(|(q, w)| {
                (
                    [x0 + hx * (q[0] + 1.0) / 2.0, y0 + hy * (q[1] + 1.0) / 2.0],
                    w * hx * hy / 4.0,
                )
            })
            .collect()
    }

    /// Mask of DOFs on the rectangle boundary.
    pub fn boundary_mask(&self) -> Vec<bool> {
        self.side_mask(true, true, true, true)
    }

    /// Mask of DOFs on the selected sides.
    pub fn side_mask(&self, left: bool, right: bool, bottom: bool, top: bool) -> Vec<bool> {
        let (nx, ny) = (self.nnx(), self.nny());
        (0..self.ndofs())
            .map(|d| {
                let (ix, iy) = (d % nx, d / nx);
                (left && ix == 0) || (right && ix == nx - 1) || (bottom && iy == 0) || (top && iy == ny - 1)
            })
            .collect()
    }

    /// Node lookup by coordinates.
    pub fn find_node(&self, p: [f64; 2], tol: f64) -> Option<usize> {
        let find = |v: &[f64], x: f64| -> Option<usize> {
            let k = v.partition_point(|a| *a < x - tol);
            (k < v.len() && (v[k] - x).abs() <= tol).then_some(k)
        };
        let ix = find(&self.xs, p[0])?;
        let iy = find(&self.ys, p[1])?;
        Some(ix + iy * self.nnx())
    }

    pub fn interpolate(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        (0..self.ndofs()).map(|d| f(self.node(d))).collect()
    }

    /// Quadrature of a pointwise function over the whole mesh.
    pub fn integrate(&self, f: impl Fn([f64; 2]) -> f64) -> f64 {
        (0..self.n_elems())
            .map(|e| self.quad_points(e).iter().map(|(x, w)| w * f(*x)).sum::<f64>())
            .sum()
    }

    /// Values and physical gradients of a nodal field at the quadrature
    /// points of element `e`.
    pub fn eval_at_quad(&self, e: usize, u: &[f64]) -> Vec<(f64, [f64; 2])> {
        let t = &self.table;
        let dofs = self.elem_dofs_vec(e);
        let (_, _, hx, hy) = self.elem_geom(e);
        (0..t.nq)
            .map(|q| {
                let mut v = 0.0;
                let mut g = [0.0; 2];
                for (l, d) in dofs.iter().enumerate() {
                    let k = q * t.nl + l;
                    v += t.phi[k] * u[*d];
                    g[0] += t.dxi[k] * u[*d];
                    g[1] += t.deta[k] * u[*d];
                }
                (v, [g[0] * 2.0 / hx, g[1] * 2.0 / hy])
            })
            .collect()
    }

    /// Physical gradients of a nodal field at the nodes of element `e`.
    pub fn grad_at_nodes(&self, e: usize, u: &[f64]) -> Vec<[f64; 2]> {
        let t = &self.table;
        let dofs = self.elem_dofs_vec(e);
        let (_, _, hx, hy) = self.elem_geom(e);
        (0..t.nl)
            .map(|k| {
                let mut g = [0.0; 2];
                for (l, d) in dofs.iter().enumerate() {
                    g[0] += t.node_dxi[k * t.nl + l] * u[*d];
                    g[1] += t.node_deta[k * t.nl + l] * u[*d];
                }
                [g[0] * 2.0 / hx, g[1] * 2.0 / hy]
            })
            .collect()
    }

    /// Zero matrix with the element-coupling sparsity pattern. All matrices
    /// returned share one pattern allocation.
    pub fn sparsity(&self) -> SparseMatrix {
        self.pattern
            .get_or_init(|| {
                let n = self.ndofs();
                let mut rows = vec![Vec::new(); n];
                let mut dofs = vec![0; self.table.nl];
                for e in 0..self.n_elems() {
                    self.elem_dofs(e, &mut dofs);
                    for &r in &dofs {
                        rows[r].extend_from_slice(&dofs);
                    }
                }
                SparseMatrix::from_row_patterns(n, n, rows)
            })
            .zeroed()
    }

    /// CSR positions of every element-local `(l, m)` entry, laid out as
    /// `e * nl * nl + l * nl + m`.
    pub(crate) fn elem_positions(&self) -> Arc<Vec<u32>> {
        Arc::clone(self.positions.get_or_init(|| {
            let pat = self.sparsity();
            let nl = self.table.nl;
            let mut pos = Vec::with_capacity(self.n_elems() * nl * nl);
            let mut dofs = vec![0; nl];
            for e in 0..self.n_elems() {
                self.elem_dofs(e, &mut dofs);
                for &r in &dofs {
                    for &c in &dofs {
                        pos.push(pat.position(r, c).expect("pattern entry") as u32);
                    }
                }
            }
            Arc::new(pos)
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dof_counts() {
        let d = build_discretization(Rect::square(0.0, 0.1).unwrap(), (10, 10), 3).unwrap();
        assert_eq!(d.ndofs(), 961);
        let d = build_discretization(Rect::square(0.0, 1.0).unwrap(), (1, 1), 1).unwrap();
        assert_eq!(d.ndofs(), 4);
        let d = build_discretization(Rect::square(0.0, 0.3).unwrap(), (9, 9), 3).unwrap();
        assert_eq!(d.ndofs(), 784);
        assert_eq!(d.boundary_mask().iter().filter(|b| **b).count(), 108);
    }

    #[test]
    fn degenerate_rectangle_rejected() {
        assert!(matches!(Rect::new(0.0, 0.0, 0.0, 1.0), Err(Error::DegenerateRectangle)));
    }

    #[test]
    fn dof_map_is_a_bijection_onto_nodes() {
        let d = build_discretization(Rect::new(0.0, 0.0, 2.0, 1.0).unwrap(), (3, 2), 2).unwrap();
        let mut seen = vec![false; d.ndofs()];
        for e in 0..d.n_elems() {
            for g in d.elem_dofs_vec(e) {
                seen[g] = true;
            }
        }
        assert!(seen.iter().all(|s| *s));
        let e = 4;
        let (x0, y0, hx, hy) = d.elem_geom(e);
        let dofs = d.elem_dofs_vec(e);
        let p = d.node(dofs[0]);
        assert!((p[0] - x0).abs() < 1e-15 && (p[1] - y0).abs() < 1e-15);
        let p = d.node(*dofs.last().unwrap());
        assert!((p[0] - x0 - hx).abs() < 1e-15 && (p[1] - y0 - hy).abs() < 1e-15);
    }

    #[test]
    fn reference_quadrature_is_exact_to_order() {
        let d = build_discretization(Rect::square(-1.0, 1.0).unwrap(), (1, 1), 3).unwrap();
        let q = d.quadrature_order() as i32;
        for i in 0..=q {
            for j in 0..=q {
                let approx = d.integrate(|x| x[0].powi(i) * x[1].powi(j));
                let m = |k: i32| if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
                let exact = m(i) * m(j);
                assert!((approx - exact).abs() <= 1e-13 * exact.abs().max(1.0));
            }
        }
    }

    #[test]
    fn find_node_round_trip() {
        let d = build_discretization(Rect::square(0.0, 0.3).unwrap(), (3, 3), 3).unwrap();
        for dof in [0, 7, 55, d.ndofs() - 1] {
            assert_eq!(d.find_node(d.node(dof), 1e-12), Some(dof));
        }
        assert_eq!(d.find_node([0.05, 0.0123], 1e-12), None);
    }
}
