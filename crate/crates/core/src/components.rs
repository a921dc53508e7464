//! Archetype components, global configurations, the partition of unity and
//! the bookkeeping of the global PUM space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{assemble_h1_gram, assemble_weighted_h1_gram, Discretization, MaskedGram, Rect, RotoTranslation};
use crate::linalg::SparseMatrix;
use crate::models::{NonlinearDiffusion, SubdomainGrid};

/// Subdomain side length.
pub const H: f64 = 0.1;
/// Overlap width.
pub const DELTA: f64 = 0.1 * H;
/// Maximal number of components covering a point.
pub const OVERLAP_COUNT: usize = 4;

const GEOM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Archetype {
    Co,
    Ed,
    Int,
}

impl Archetype {
    pub const ALL: [Archetype; 3] = [Archetype::Co, Archetype::Ed, Archetype::Int];

    pub fn label(self) -> &'static str {
        match self {
            Archetype::Co => "co",
            Archetype::Ed => "ed",
            Archetype::Int => "int",
        }
    }

    pub fn from_label(s: &str) -> Result<Self> {
        match s {
            "co" => Ok(Archetype::Co),
            "ed" => Ok(Archetype::Ed),
            "int" => Ok(Archetype::Int),
            _ => Err(Error::InvalidInput(format!("unknown archetype '{s}'"))),
        }
    }

    /// Number of subdomains in the oversampling patch.
    pub fn patch_cells(self) -> usize {
        match self {
            Archetype::Co => 4,
            Archetype::Ed => 6,
            Archetype::Int => 9,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Dirichlet walls in reference coordinates: (left, bottom).
    fn walls(self) -> (bool, bool) {
        match self {
            Archetype::Co => (true, true),
            Archetype::Ed => (true, false),
            Archetype::Int => (false, false),
        }
    }
}

impl std::fmt::Display for Archetype {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Graded tensor mesh shared by every discretization in a study.
///
/// Each subdomain `[kH, (k+1)H]` carries the breakpoints
/// `kH + {0, delta/2, ..., H - delta/2, H}` with `m - 2` uniform elements in
/// between, so the partition-of-unity kinks at `kH +- delta/2` always lie on
/// element edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    pub h: f64,
    pub delta: f64,
    /// elements per subdomain and direction
    pub m: usize,
    pub degree: usize,
}

impl Default for MeshSpec {
    fn default() -> Self {
        Self::standard()
    }
}

impl MeshSpec {
    pub fn standard() -> Self {
        Self { h: H, delta: DELTA, m: 10, degree: 3 }
    }

    pub fn fast() -> Self {
        Self { h: H, delta: DELTA, m: 4, degree: 2 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 3 || self.degree == 0 || !(self.h > 0.0) || !(self.delta > 0.0) || self.delta >= self.h {
            return Err(Error::Config(format!("invalid mesh spec {self:?}")));
        }
        Ok(())
    }

    /// Breakpoints of one subdomain relative to its lower-left corner.
    pub fn local_breaks(&self) -> Vec<f64> {
        let (h, d) = (self.h, self.delta);
        let n_mid = self.m - 2;
        let mut b = vec![0.0];
        for k in 0..=n_mid {
            b.push(d / 2.0 + (h - d) * k as f64 / n_mid as f64);
        }
        b.push(h);
        b
    }

    /// All breakpoints in `[a, b]`; both ends must be breakpoints.
    pub fn breaks(&self, a: f64, b: f64) -> Result<Vec<f64>> {
        let local = self.local_breaks();
        let tol = GEOM_TOL * self.h;
        let k0 = (a / self.h).floor() as i64 - 1;
        let k1 = (b / self.h).ceil() as i64 + 1;
        let mut out: Vec<f64> = Vec::new();
        for k in k0..=k1 {
            for t in &local[..local.len() - 1] {
                let x = k as f64 * self.h + t;
                if x >= a - tol && x <= b + tol {
                    out.push(x);
                }
            }
        }
        if out.first().is_none_or(|x| (x - a).abs() > tol) || out.last().is_none_or(|x| (x - b).abs() > tol) {
            return Err(Error::MeshNotConforming(format!("[{a}, {b}] does not end on breakpoints")));
        }
        // snap the ends exactly
        *out.first_mut().unwrap() = a;
        *out.last_mut().unwrap() = b;
        Ok(out)
    }

    pub fn discretization(&self, rect: Rect) -> Result<Discretization> {
        self.validate()?;
        Discretization::from_breaks(self.breaks(rect.x0, rect.x1)?, self.breaks(rect.y0, rect.y1)?, self.degree)
    }

    /// Mesh of the global domain `(0, n_dd H)^2`.
    pub fn global_discretization(&self, n_dd: usize) -> Result<Discretization> {
        self.discretization(Rect::square(0.0, n_dd as f64 * self.h)?)
    }

    fn ramp_lower(&self, t: f64) -> f64 {
        ((t + self.delta / 2.0) / self.delta).clamp(0.0, 1.0)
    }

    fn ramp_upper(&self, t: f64) -> f64 {
        ((self.h + self.delta / 2.0 - t) / self.delta).clamp(0.0, 1.0)
    }
}

/// Oversampling patch of an archetype in reference coordinates.
#[derive(Debug, Clone)]
pub struct Patch {
    pub disc: Discretization,
    /// Patch subdomains, row-major from the bottom-left.
    pub grid: SubdomainGrid,
    /// Cell holding the reference subdomain `(0, H)^2`.
    pub home_cell: usize,
    /// All boundary DOFs of the patch.
    pub dirichlet: Vec<bool>,
    /// Inlet DOFs with their arclength coordinate `s` in `[0, 1]`.
    pub inlet: Vec<(usize, f64)>,
    /// Patch DOF of every reference-domain DOF.
    pub omega_dofs: Vec<usize>,
}

/// Reference template of a corner, edge or internal component.
#[derive(Debug, Clone)]
pub struct ArchetypeComponent {
    pub archetype: Archetype,
    pub mesh: MeshSpec,
    /// Discretization of the reference domain.
    pub disc: Discretization,
    /// Nodal PoU weight on the reference domain (1 up to the walls).
    pub phi_hat: Vec<f64>,
    /// Nodes on Dirichlet walls.
    pub wall: Vec<bool>,
    /// `phi_hat` with wall entries zeroed; the nodal weight of PUM functions.
    pub weight: Vec<f64>,
    /// Unweighted H1 Gram on the reference domain.
    pub h1_gram: SparseMatrix,
    /// Gram of the local norm `|| I_h(phi w) ||_{H1}`.
    pub norm_gram: SparseMatrix,
    /// Nodes where local corrections live (`phi_hat > 0`, off the walls).
    pub interior: Vec<bool>,
    /// Factored `h1_gram` on `interior`.
    pub riesz: MaskedGram,
    pub patch: Patch,
}

impl ArchetypeComponent {
    pub fn new(archetype: Archetype, mesh: MeshSpec) -> Result<Self> {
        mesh.validate()?;
        let (h, d) = (mesh.h, mesh.delta);
        let (wall_x, wall_y) = archetype.walls();
        let lo = |w: bool| if w { 0.0 } else { -d / 2.0 };
        let rect = Rect::new(lo(wall_x), lo(wall_y), h + d / 2.0, h + d / 2.0)?;
        let disc = mesh.discretization(rect)?;
        let f1 = |t: f64, w: bool| if w { mesh.ramp_upper(t) } else { mesh.ramp_lower(t).min(mesh.ramp_upper(t)) };
        let phi_hat = disc.interpolate(|p| f1(p[0], wall_x) * f1(p[1], wall_y));
        let wall = disc.side_mask(wall_x, false, wall_y, false);
        let weight: Vec<f64> = phi_hat.iter().zip(&wall).map(|(p, w)| if *w { 0.0 } else { *p }).collect();
        let h1_gram = assemble_h1_gram(&disc);
        let norm_gram = h1_gram.scale_sym(&phi_hat);
        let interior: Vec<bool> = weight.iter().map(|w| *w > 0.0).collect();
        let riesz = MaskedGram::new(&h1_gram, &interior)?;
        let patch = build_patch(archetype, &mesh, &disc)?;
        Ok(Self {
            archetype,
            mesh,
            disc,
            phi_hat,
            wall,
            weight,
            h1_gram,
            norm_gram,
            interior,
            riesz,
            patch,
        })
    }

    pub fn ndofs(&self) -> usize {
        self.disc.ndofs()
    }

    /// `|| I_h(phi_hat w) ||_{H1}` on the reference domain.
    pub fn local_norm(&self, w: &[f64]) -> f64 {
        self.norm_gram.quad_form(w).max(0.0).sqrt()
    }

    /// Restriction of a patch field to the reference domain.
    pub fn restrict(&self, patch_field: &[f64]) -> Vec<f64> {
        self.patch.omega_dofs.iter().map(|&k| patch_field[k]).collect()
    }
}

/// Local weighted norm of a reference field.
pub fn local_norm(component: &ArchetypeComponent, w: &[f64]) -> f64 {
    component.local_norm(w)
}

fn build_patch(arch: Archetype, mesh: &MeshSpec, omega: &Discretization) -> Result<Patch> {
    let h = mesh.h;
    let (wall_x, wall_y) = arch.walls();
    let (x0, y0) = (if wall_x { 0.0 } else { -h }, if wall_y { 0.0 } else { -h });
    let rect = Rect::new(x0, y0, 2.0 * h, 2.0 * h)?;
    let disc = mesh.discretization(rect)?;
    let nx = ((rect.x1 - rect.x0) / h).round() as usize;
    let ny = ((rect.y1 - rect.y0) / h).round() as usize;
    let grid = SubdomainGrid { origin: [x0, y0], h, nx, ny };
    debug_assert_eq!(grid.n_cells(), arch.patch_cells());
    let home_cell = grid.cell_of([h / 2.0, h / 2.0]);

    // Inlet path in reference coordinates.
    let path: Vec<[f64; 2]> = match arch {
        Archetype::Int => vec![[-h, -h], [2.0 * h, -h], [2.0 * h, 2.0 * h], [-h, 2.0 * h], [-h, -h]],
        Archetype::Ed => vec![[0.0, -h], [2.0 * h, -h], [2.0 * h, 2.0 * h], [0.0, 2.0 * h]],
        Archetype::Co => vec![[2.0 * h, 0.0], [2.0 * h, 2.0 * h], [0.0, 2.0 * h]],
    };
    let dirichlet = disc.boundary_mask();
    let mut inlet = Vec::new();
    for (dof, on_bnd) in dirichlet.iter().enumerate() {
        if !on_bnd {
            continue;
        }
        if let Some(s) = arclength(&path, disc.node(dof), GEOM_TOL * h) {
            inlet.push((dof, s));
        }
    }
    let omega_dofs = (0..omega.ndofs())
        .map(|l| {
            disc.find_node(omega.node(l), GEOM_TOL * h)
                .ok_or_else(|| Error::MeshNotConforming("reference domain not resolved by the patch mesh".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Patch { disc, grid, home_cell, dirichlet, inlet, omega_dofs })
}

/// Normalized arclength of `p` along an axis-aligned polyline, if on it.
fn arclength(path: &[[f64; 2]], p: [f64; 2], tol: f64) -> Option<f64> {
    let seg_len = |a: [f64; 2], b: [f64; 2]| (b[0] - a[0]).abs() + (b[1] - a[1]).abs();
    let total: f64 = path.windows(2).map(|w| seg_len(w[0], w[1])).sum();
    let mut acc = 0.0;
    for w in path.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = seg_len(a, b);
        let inside = |t: f64, u: f64, v: f64| t >= u.min(v) - tol && t <= u.max(v) + tol;
        if inside(p[0], a[0], b[0]) && inside(p[1], a[1], b[1]) {
            let s = (acc + seg_len(a, p)) / total;
            // exact endpoints
            return Some(if s < tol { 0.0 } else if s > 1.0 - tol { 1.0 } else { s });
        }
        acc += len;
    }
    None
}

/// The three archetype components on one mesh specification.
#[derive(Debug, Clone)]
pub struct ComponentLibrary {
    pub mesh: MeshSpec,
    components: Vec<ArchetypeComponent>,
}

impl ComponentLibrary {
    pub fn new(mesh: MeshSpec) -> Result<Self> {
        let components = Archetype::ALL
            .iter()
            .map(|a| ArchetypeComponent::new(*a, mesh))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { mesh, components })
    }

    pub fn get(&self, a: Archetype) -> &ArchetypeComponent {
        &self.components[a.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = &ArchetypeComponent> {
        self.components.iter()
    }
}

/// Grid of `n_dd x n_dd` subdomains with labels, maps and parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalConfiguration {
    pub n_dd: usize,
    pub h: f64,
    pub labels: Vec<Archetype>,
    pub maps: Vec<RotoTranslation>,
    /// `(mu1, mu2)` per subdomain.
    pub params: Vec<[f64; 2]>,
    /// One-based source subdomain, `0` for none.
    pub i_star: usize,
}

/// Labels and maps for an `n_dd x n_dd` grid. Component `i + j n_dd` sits in
/// column `i`, row `j`. Each map rotates by the smallest quarter turn that
/// places the reference walls on the domain boundary.
pub fn instantiate_configuration(n_dd: usize, params: Vec<[f64; 2]>, i_star: usize) -> Result<GlobalConfiguration> {
    if n_dd < 2 {
        return Err(Error::InvalidInput("n_dd must be at least 2".into()));
    }
    let n = n_dd * n_dd;
    if params.len() != n {
        return Err(Error::DimensionMismatch(format!("{} parameter pairs for {n} subdomains", params.len())));
    }
    if i_star > n {
        return Err(Error::InvalidInput(format!("source index {i_star} exceeds {n}")));
    }
    let h = H;
    let len = n_dd as f64 * h;
    let on_boundary = |p: [f64; 2]| {
        let tol = GEOM_TOL * h;
        p[0].abs() < tol || p[1].abs() < tol || (p[0] - len).abs() < tol || (p[1] - len).abs() < tol
    };
    let mut labels = Vec::with_capacity(n);
    let mut maps = Vec::with_capacity(n);
    for c in 0..n {
        let (i, j) = (c % n_dd, c / n_dd);
        let bx = i == 0 || i == n_dd - 1;
        let by = j == 0 || j == n_dd - 1;
        let label = match (bx, by) {
            (true, true) => Archetype::Co,
            (false, false) => Archetype::Int,
            _ => Archetype::Ed,
        };
        let center_ref = [h / 2.0, h / 2.0];
        let center_glob = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h];
        let (wall_x, wall_y) = label.walls();
        // wall midpoints in reference coordinates
        let mut probes = Vec::new();
        if wall_x {
            probes.push([0.0, h / 2.0]);
        }
        if wall_y {
            probes.push([h / 2.0, 0.0]);
        }
        let map = (0..4u8)
            .map(|k| RotoTranslation::new(k, center_ref, center_glob))
            .find(|m| probes.iter().all(|p| on_boundary(m.apply(*p))))
            .ok_or_else(|| Error::InvalidInput(format!("no admissible rotation for component {c}")))?;
        labels.push(label);
        maps.push(map);
    }
    Ok(GlobalConfiguration { n_dd, h, labels, maps, params, i_star })
}

impl GlobalConfiguration {
    pub fn n_components(&self) -> usize {
        self.n_dd * self.n_dd
    }

    pub fn grid(&self) -> SubdomainGrid {
        SubdomainGrid { origin: [0.0, 0.0], h: self.h, nx: self.n_dd, ny: self.n_dd }
    }

    pub fn domain(&self) -> Result<Rect> {
        Rect::square(0.0, self.n_dd as f64 * self.h)
    }

    /// `(co, ed, int)` counts.
    pub fn counts(&self) -> (usize, usize, usize) {
        let c = |a| self.labels.iter().filter(|l| **l == a).count();
        (c(Archetype::Co), c(Archetype::Ed), c(Archetype::Int))
    }

    pub fn model(&self) -> Result<NonlinearDiffusion> {
        NonlinearDiffusion::new(self.grid(), self.params.clone(), self.i_star.checked_sub(1))
    }

    /// Components whose supports may overlap component `c` (itself included).
    pub fn neighbors(&self, c: usize) -> Vec<usize> {
        let n = self.n_dd as i64;
        let (i, j) = ((c as i64) % n, (c as i64) / n);
        let mut out = Vec::new();
        for dj in -1..=1 {
            for di in -1..=1 {
                let (a, b) = (i + di, j + dj);
                if a >= 0 && a < n && b >= 0 && b < n {
                    out.push((a + b * n) as usize);
                }
            }
        }
        out
    }
}

/// Nodal values of every `phi_i` on the global mesh, stored on supports.
#[derive(Debug, Clone)]
pub struct PoUField {
    /// `(dof, value)` pairs with positive value, per component.
    pub support: Vec<Vec<(usize, f64)>>,
    /// Measured `max |grad phi_i|` at element nodes.
    pub grad_max: Vec<f64>,
    /// Gradient bound `sqrt(2) / delta`.
    pub c_bound: f64,
    pub overlap_count: usize,
    ndofs: usize,
}

impl PoUField {
    pub fn values(&self, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.ndofs];
        for (d, x) in &self.support[i] {
            v[*d] = *x;
        }
        v
    }

    /// `sum_i phi_i` at every node.
    pub fn nodal_sum(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.ndofs];
        for sup in &self.support {
            for (d, x) in sup {
                s[*d] += x;
            }
        }
        s
    }

    /// Largest number of components with positive weight at a node.
    pub fn max_cover(&self) -> usize {
        let mut c = vec![0usize; self.ndofs];
        for sup in &self.support {
            for (d, _) in sup {
                c[*d] += 1;
            }
        }
        c.into_iter().max().unwrap_or(0)
    }
}

fn phi_1d(i: usize, n: usize, h: f64, d: f64, t: f64) -> f64 {
    let lo = if i == 0 { 1.0 } else { ((t - (i as f64 * h - d / 2.0)) / d).clamp(0.0, 1.0) };
    let hi = if i + 1 == n { 1.0 } else { (((i + 1) as f64 * h + d / 2.0 - t) / d).clamp(0.0, 1.0) };
    lo.min(hi)
}

/// Tensorized piecewise bilinear partition of unity for the overlap width
/// `delta`. The mesh must have element edges at every kink.
pub fn build_pou(cfg: &GlobalConfiguration, disc: &Discretization, delta: f64) -> Result<PoUField> {
    let n = cfg.n_dd;
    let h = cfg.h;
    let len = n as f64 * h;
    let r = disc.rect();
    let tol = GEOM_TOL * h;
    if r.x0.abs() > tol || r.y0.abs() > tol || (r.x1 - len).abs() > tol || (r.y1 - len).abs() > tol {
        return Err(Error::MeshNotConforming("mesh does not cover the configuration domain".into()));
    }
    for k in 1..n {
        for t in [k as f64 * h - delta / 2.0, k as f64 * h + delta / 2.0] {
            for b in [disc.x_breaks(), disc.y_breaks()] {
                if !b.iter().any(|x| (x - t).abs() < tol) {
                    return Err(Error::MeshNotConforming(format!("no element edge at the PoU kink {t}")));
                }
            }
        }
    }
    let xs = disc.xs();
    let ys = disc.ys();
    let nnx = disc.nnx();
    let mut support = Vec::with_capacity(n * n);
    let mut grad_max = Vec::with_capacity(n * n);
    let mut full = vec![0.0; disc.ndofs()];
    for c in 0..n * n {
        let (i, j) = (c % n, c / n);
        let fx: Vec<f64> = xs.iter().map(|x| phi_1d(i, n, h, delta, *x)).collect();
        let fy: Vec<f64> = ys.iter().map(|y| phi_1d(j, n, h, delta, *y)).collect();
        let mut sup = Vec::new();
        for (iy, vy) in fy.iter().enumerate() {
            if *vy == 0.0 {
                continue;
            }
            for (ix, vx) in fx.iter().enumerate() {
                let v = vx * vy;
                if v > 0.0 {
                    sup.push((ix + iy * nnx, v));
                }
            }
        }
        for (d, v) in &sup {
            full[*d] = *v;
        }
        let mut gmax: f64 = 0.0;
        for e in 0..disc.n_elems() {
            let dofs = disc.elem_dofs_vec(e);
            if dofs.iter().all(|d| full[*d] == 0.0) {
                continue;
            }
            for g in disc.grad_at_nodes(e, &full) {
                gmax = gmax.max(g[0].hypot(g[1]));
            }
        }
        for (d, _) in &sup {
            full[*d] = 0.0;
        }
        support.push(sup);
        grad_max.push(gmax);
    }
    Ok(PoUField {
        support,
        grad_max,
        c_bound: 2f64.sqrt() / delta,
        overlap_count: OVERLAP_COUNT,
        ndofs: disc.ndofs(),
    })
}

/// Global nodal interpolant of `(zeta o Phi_i^{-1}) phi_i`.
pub fn pum_basis_function(space: &PumSpace, pou: &PoUField, zeta: &[f64], i: usize) -> Vec<f64> {
    let phi = pou.values(i);
    let mut out = vec![0.0; phi.len()];
    for (l, g) in space.ref_to_global[i].iter().enumerate() {
        out[*g] = phi[*g] * zeta[l];
    }
    out
}

/// Reference-to-global node maps and overlap structure of a configuration.
#[derive(Debug, Clone)]
pub struct PumSpace {
    pub cfg: GlobalConfiguration,
    pub disc: Discretization,
    /// Global DOF of every reference DOF, per component.
    pub ref_to_global: Vec<Vec<usize>>,
    /// Components sharing support with each component (itself first).
    pub neighbors: Vec<Vec<usize>>,
    /// For each component `j` and each neighbor `k`: reference node pairs
    /// `(l_j, l_k)` on the same global node with `k`'s weight positive.
    pub overlaps: Vec<Vec<(usize, Vec<(u32, u32)>)>>,
    /// Homogeneous Dirichlet DOFs of the global problem.
    pub dirichlet: Vec<bool>,
}

impl PumSpace {
    pub fn new(cfg: GlobalConfiguration, lib: &ComponentLibrary) -> Result<Self> {
        let disc = lib.mesh.global_discretization(cfg.n_dd)?;
        let n = cfg.n_components();
        let tol = GEOM_TOL * cfg.h;
        let mut ref_to_global = Vec::with_capacity(n);
        for c in 0..n {
            let comp = lib.get(cfg.labels[c]);
            let map = &cfg.maps[c];
            let m = (0..comp.ndofs())
                .map(|l| {
                    disc.find_node(map.apply(comp.disc.node(l)), tol).ok_or_else(|| {
                        Error::MeshNotConforming(format!("component {c} node {l} has no global counterpart"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            ref_to_global.push(m);
        }
        let neighbors: Vec<Vec<usize>> = (0..n)
            .map(|c| {
                let mut nb = cfg.neighbors(c);
                nb.retain(|k| *k != c);
                nb.insert(0, c);
                nb
            })
            .collect();
        let mut overlaps: Vec<Vec<(usize, Vec<(u32, u32)>)>> = vec![Vec::new(); n];
        let mut g2l = vec![u32::MAX; disc.ndofs()];
        for (j, ov) in overlaps.iter_mut().enumerate() {
            for &k in &neighbors[j] {
                let wk = &lib.get(cfg.labels[k]).weight;
                for (lk, g) in ref_to_global[k].iter().enumerate() {
                    if wk[lk] > 0.0 {
                        g2l[*g] = lk as u32;
                    }
                }
                let pairs: Vec<(u32, u32)> = ref_to_global[j]
                    .iter()
                    .enumerate()
                    .filter(|(_, g)| g2l[**g] != u32::MAX)
                    .map(|(lj, g)| (lj as u32, g2l[*g]))
                    .collect();
                for g in &ref_to_global[k] {
                    g2l[*g] = u32::MAX;
                }
                if !pairs.is_empty() {
                    ov.push((k, pairs));
                }
            }
        }
        let dirichlet = disc.boundary_mask();
        Ok(Self { cfg, disc, ref_to_global, neighbors, overlaps, dirichlet })
    }

    pub fn n_components(&self) -> usize {
        self.cfg.n_components()
    }
}

/// Weighted H1 Gram on the global mesh (re-exported for oracles).
pub fn weighted_gram(disc: &Discretization, weight: &[f64]) -> SparseMatrix {
    assemble_weighted_h1_gram(disc, Some(weight))
}
