//! Global component-based reduced-order model on the PUM space.
//!
//! The reduced state stacks the coefficients of every component,
//! `u[offset_j + a]` multiplying `zeta_{a,j} = I_h((Z_{L_j} e_a) o Phi_j^{-1} phi_j)`.
//! Residuals and Jacobians are assembled per component on the reference mesh
//! of its archetype.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::components::{Archetype, ComponentLibrary, PumSpace};
use crate::error::{Error, Result};
use crate::fem::{
    assemble_h1_gram, assemble_jacobian, assemble_residual, newton, solve_nonlinear, NewtonReport, NewtonSettings,
    NonlinearSystem, RotoTranslation, WeakForm,
};
use crate::linalg::SparseMatrix;

/// Reduced system for one configuration and one set of archetype bases.
#[derive(Debug, Clone)]
pub struct RomSystem {
    pub space: Arc<PumSpace>,
    pub lib: Arc<ComponentLibrary>,
    /// Orthonormal modes per archetype (indexed by `Archetype::index`).
    pub bases: Vec<DMatrix<f64>>,
    /// `diag(weight) Z` per archetype: nodal values of the PUM functions.
    weighted: Vec<DMatrix<f64>>,
    offsets: Vec<usize>,
    pattern: SparseMatrix,
    /// CSR position of the first entry of block `(j, neighbor slot)` per row.
    block_pos: Vec<Vec<usize>>,
}

impl RomSystem {
    pub fn n_components(&self) -> usize {
        self.space.n_components()
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn offset(&self, j: usize) -> usize {
        self.offsets[j]
    }

    pub fn block_size(&self, j: usize) -> usize {
        self.offsets[j + 1] - self.offsets[j]
    }

    fn label(&self, j: usize) -> Archetype {
        self.space.cfg.labels[j]
    }

    fn weighted_of(&self, j: usize) -> &DMatrix<f64> {
        &self.weighted[self.label(j).index()]
    }

    /// Nodal field on the reference mesh of component `j`.
    pub fn local_field(&self, j: usize, u: &[f64]) -> Vec<f64> {
        let comp = self.lib.get(self.label(j));
        let mut out = vec![0.0; comp.ndofs()];
        for (k, pairs) in &self.space.overlaps[j] {
            let v = self.weighted_of(*k);
            let uk = &u[self.offsets[*k]..self.offsets[*k + 1]];
            for (lj, lk) in pairs {
                let row = v.row(*lk as usize);
                out[*lj as usize] += row.iter().zip(uk).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        out
    }

    fn map(&self, j: usize) -> &RotoTranslation {
        &self.space.cfg.maps[j]
    }

    /// Nodal coefficients in the global HF space.
    pub fn reconstruct(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.space.disc.ndofs()];
        for j in 0..self.n_components() {
            let v = self.weighted_of(j);
            let c = DVector::from_column_slice(&u[self.offsets[j]..self.offsets[j + 1]]);
            let loc = v * c;
            for (l, g) in self.space.ref_to_global[j].iter().enumerate() {
                out[*g] += loc[l];
            }
        }
        out
    }

    /// Sparse matrix whose columns are the PUM basis functions.
    pub fn basis_matrix(&self) -> SparseMatrix {
        let mut trip = Vec::new();
        for j in 0..self.n_components() {
            let v = self.weighted_of(j);
            for (l, g) in self.space.ref_to_global[j].iter().enumerate() {
                for a in 0..v.ncols() {
                    let x = v[(l, a)];
                    if x != 0.0 {
                        trip.push((*g, self.offsets[j] + a, x));
                    }
                }
            }
        }
        SparseMatrix::from_triplets(self.space.disc.ndofs(), self.dim(), &trip)
    }

    /// Projection of a global field onto the PUM space in the inner product of
    /// `gram`; returns the reduced coefficients.
    pub fn project(&self, field: &[f64], gram: &SparseMatrix) -> Result<Vec<f64>> {
        let b = self.basis_matrix();
        let gb = gram.mul_dense(&b.to_dense());
        let bd = b.to_dense();
        let m = bd.transpose() * &gb;
        let rhs = gb.transpose() * DVector::from_column_slice(field);
        let chol = nalgebra::Cholesky::new(m).ok_or(Error::IndefiniteGram)?;
        Ok(chol.solve(&rhs).as_slice().to_vec())
    }
}

/// Builds the reduced system. Every basis must be non-empty.
pub fn assemble_rom(
    space: Arc<PumSpace>,
    lib: Arc<ComponentLibrary>,
    bases: &[DMatrix<f64>],
) -> Result<RomSystem> {
    if bases.len() != Archetype::ALL.len() {
        return Err(Error::DimensionMismatch("one basis per archetype expected".into()));
    }
    let mut weighted = Vec::with_capacity(3);
    for a in Archetype::ALL {
        let z = &bases[a.index()];
        let comp = lib.get(a);
        let used = space.cfg.labels.contains(&a);
        if z.nrows() != comp.ndofs() {
            return Err(Error::DimensionMismatch(format!(
                "{a} basis has {} rows, reference mesh has {} nodes",
                z.nrows(),
                comp.ndofs()
            )));
        }
        if used && z.ncols() == 0 {
            return Err(Error::InvalidInput(format!("empty {a} basis")));
        }
        let mut w = z.clone();
        for (l, mut row) in w.row_iter_mut().enumerate() {
            row *= comp.weight[l];
        }
        weighted.push(w);
    }
    let n = space.n_components();
    let mut offsets = vec![0];
    for j in 0..n {
        offsets.push(offsets[j] + bases[space.cfg.labels[j].index()].ncols());
    }
    let dim = offsets[n];
    let mut rows = Vec::with_capacity(dim);
    for j in 0..n {
        let mut cols = Vec::new();
        for k in &space.neighbors[j] {
            cols.extend(offsets[*k]..offsets[*k + 1]);
        }
        for _ in offsets[j]..offsets[j + 1] {
            rows.push(cols.clone());
        }
    }
    let pattern = SparseMatrix::from_row_patterns(dim, dim, rows);
    let block_pos = (0..dim)
        .map(|r| {
            let j = offsets.partition_point(|o| *o <= r) - 1;
            space.neighbors[j]
                .iter()
                .map(|k| pattern.position(r, offsets[*k]).expect("block entry"))
                .collect()
        })
        .collect();
    Ok(RomSystem { space, lib, bases: bases.to_vec(), weighted, offsets, pattern, block_pos })
}

/// `R_{(j,a)} = G(u, zeta_{a,j})`.
pub fn reduced_residual(sys: &RomSystem, form: &dyn WeakForm, u: &[f64]) -> Result<Vec<f64>> {
    check_len(sys, u)?;
    let parts: Vec<Vec<f64>> = (0..sys.n_components())
        .into_par_iter()
        .map(|j| {
            let comp = sys.lib.get(sys.label(j));
            let ul = sys.local_field(j, u);
            let r = assemble_residual(&comp.disc, form, sys.map(j), &ul)?;
            Ok((sys.weighted_of(j).transpose() * DVector::from_vec(r)).as_slice().to_vec())
        })
        .collect::<Result<_>>()?;
    Ok(parts.concat())
}

/// Residual and analytic Jacobian; the pattern is shared by all calls.
pub fn reduced_jacobian(sys: &RomSystem, form: &dyn WeakForm, u: &[f64]) -> Result<(Vec<f64>, SparseMatrix)> {
    check_len(sys, u)?;
    type Part = (Vec<f64>, Vec<DMatrix<f64>>);
    let parts: Vec<Part> = (0..sys.n_components())
        .into_par_iter()
        .map(|j| -> Result<Part> {
            let comp = sys.lib.get(sys.label(j));
            let ul = sys.local_field(j, u);
            let (r, jl) = assemble_jacobian(&comp.disc, form, sys.map(j), &ul)?;
            let vj = sys.weighted_of(j);
            let rj = (vj.transpose() * DVector::from_vec(r)).as_slice().to_vec();
            // w = J_loc^T V_j
            let w = jl.transpose_mul_dense(vj);
            let mut blocks = Vec::with_capacity(sys.space.neighbors[j].len());
            for k in &sys.space.neighbors[j] {
                let vk = sys.weighted_of(*k);
                let pairs = sys.space.overlaps[j].iter().find(|(kk, _)| kk == k).map(|p| &p.1);
                let block = match pairs {
                    Some(pairs) => {
                        let a = DMatrix::from_fn(pairs.len(), w.ncols(), |p, c| w[(pairs[p].0 as usize, c)]);
                        let b = DMatrix::from_fn(pairs.len(), vk.ncols(), |p, c| vk[(pairs[p].1 as usize, c)]);
                        a.transpose() * b
                    }
                    None => DMatrix::zeros(vj.ncols(), vk.ncols()),
                };
                blocks.push(block);
            }
            Ok((rj, blocks))
        })
        .collect::<Result<_>>()?;
    let mut jac = sys.pattern.zeroed();
    let mut r = Vec::with_capacity(sys.dim());
    {
        let vals = jac.values_mut();
        for (j, (rj, blocks)) in parts.into_iter().enumerate() {
            r.extend(rj);
            for (slot, block) in blocks.iter().enumerate() {
                for a in 0..block.nrows() {
                    let p0 = sys.block_pos[sys.offsets[j] + a][slot];
                    for b in 0..block.ncols() {
                        vals[p0 + b] = block[(a, b)];
                    }
                }
            }
        }
    }
    Ok((r, jac))
}

fn check_len(sys: &RomSystem, u: &[f64]) -> Result<()> {
    if u.len() != sys.dim() {
        return Err(Error::DimensionMismatch(format!("state of length {} for N = {}", u.len(), sys.dim())));
    }
    Ok(())
}

struct RomProblem<'a> {
    sys: &'a RomSystem,
    form: &'a dyn WeakForm,
}

impl NonlinearSystem for RomProblem<'_> {
    fn residual(&self, u: &[f64]) -> Result<Vec<f64>> {
        reduced_residual(self.sys, self.form, u)
    }

    fn linearize(&self, u: &[f64]) -> Result<(Vec<f64>, SparseMatrix)> {
        reduced_jacobian(self.sys, self.form, u)
    }
}

/// Newton solve of the reduced system, from zero unless `init` is given.
pub fn solve_rom(
    sys: &RomSystem,
    form: &dyn WeakForm,
    settings: &NewtonSettings,
    init: Option<&[f64]>,
) -> Result<(Vec<f64>, NewtonReport)> {
    let u0 = match init {
        Some(v) => {
            check_len(sys, v)?;
            v.to_vec()
        }
        None => vec![0.0; sys.dim()],
    };
    newton(&RomProblem { sys, form }, u0, settings).map_err(|e| e.with_context("reduced solve"))
}

/// HF solution of the global problem with homogeneous Dirichlet data.
pub fn solve_hf(space: &PumSpace, form: &dyn WeakForm, settings: &NewtonSettings) -> Result<(Vec<f64>, NewtonReport)> {
    let zero = vec![0.0; space.disc.ndofs()];
    solve_nonlinear(&space.disc, form, &space.dirichlet, &zero, settings, None)
        .map_err(|e| e.with_context("global HF solve"))
}

/// HF residual covector with the Dirichlet rows removed (zeroed).
pub fn hf_residual(space: &PumSpace, form: &dyn WeakForm, u: &[f64]) -> Result<Vec<f64>> {
    let mut r = assemble_residual(&space.disc, form, &RotoTranslation::identity(), u)?;
    for (ri, d) in r.iter_mut().zip(&space.dirichlet) {
        if *d {
            *ri = 0.0;
        }
    }
    Ok(r)
}

/// Global H1 Gram of the HF space.
pub fn global_h1_gram(space: &PumSpace) -> SparseMatrix {
    assemble_h1_gram(&space.disc)
}

/// Summary of a reduced solve, serialized to JSON by the drivers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub n_dd: usize,
    pub dim: usize,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub wall_time_s: f64,
}
