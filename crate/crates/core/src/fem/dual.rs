use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{dot, SparseCholesky, SparseMatrix};

/// Cholesky factor of a Gram matrix restricted to a subset of DOFs, used to
/// compute Riesz representatives and dual norms of residual covectors.
#[derive(Clone)]
pub struct MaskedGram {
    n_full: usize,
    index: Vec<usize>,
    chol: Arc<SparseCholesky>,
    sub: SparseMatrix,
}

impl std::fmt::Debug for MaskedGram {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MaskedGram").field("n_full", &self.n_full).field("dim", &self.index.len()).finish()
    }
}

impl MaskedGram {
    pub fn new(gram: &SparseMatrix, mask: &[bool]) -> Result<Self> {
        if gram.nrows() != mask.len() || gram.ncols() != mask.len() {
            return Err(Error::DimensionMismatch("Gram size differs from mask length".into()));
        }
        let index: Vec<usize> = (0..mask.len()).filter(|i| mask[*i]).collect();
        let mut local = vec![usize::MAX; mask.len()];
        for (k, i) in index.iter().enumerate() {
            local[*i] = k;
        }
        let mut trip = Vec::new();
        for (k, &i) in index.iter().enumerate() {
            let (cols, vals) = gram.row(i);
            for (c, v) in cols.iter().zip(vals) {
                if local[*c] != usize::MAX {
                    trip.push((k, local[*c], *v));
                }
            }
        }
        let sub = SparseMatrix::from_triplets(index.len(), index.len(), &trip);
        let chol = Arc::new(SparseCholesky::factor(&sub)?);
        Ok(Self {
            n_full: mask.len(),
            index,
            chol,
            sub,
        })
    }

    pub fn dim(&self) -> usize {
        self.index.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.index
    }

    /// Riesz representative of `f` (full-length covector, entries outside the
    /// mask ignored) as a full-length vector, and its norm.
    pub fn riesz(&self, f: &[f64]) -> (Vec<f64>, f64) {
        assert_eq!(f.len(), self.n_full);
        let fs: Vec<f64> = self.index.iter().map(|i| f[*i]).collect();
        let psi = self.chol.solve(&fs);
        let norm = dot(&fs, &psi).max(0.0).sqrt();
        let mut full = vec![0.0; self.n_full];
        for (k, i) in self.index.iter().enumerate() {
            full[*i] = psi[k];
        }
        (full, norm)
    }

    pub fn dual_norm(&self, f: &[f64]) -> f64 {
        self.riesz(f).1
    }

    /// Restricted Gram matrix.
    pub fn matrix(&self) -> &SparseMatrix {
        &self.sub
    }
}

/// `sup_v f(v) / |v|_G` over the masked subspace, i.e. `sqrt(f^T G^{-1} f)` on
/// the masked block.
pub fn dual_norm(functional: &[f64], gram: &SparseMatrix, subspace_mask: &[bool]) -> Result<f64> {
    Ok(MaskedGram::new(gram, subspace_mask)?.dual_norm(functional))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_norm_examples() {
        let g = SparseMatrix::from_triplets(
            3,
            3,
            &[(0, 0, 2.0), (0, 1, 0.5), (1, 0, 0.5), (1, 1, 1.0), (2, 2, 3.0)],
        );
        let mask = [true, true, true];
        let e1 = g.matvec(&[1.0, 0.0, 0.0]);
        assert!((dual_norm(&e1, &g, &mask).unwrap() - 2f64.sqrt()).abs() < 1e-14);
        assert_eq!(dual_norm(&[0.0; 3], &g, &mask).unwrap(), 0.0);
        let f = [0.3, -1.2, 2.0];
        let id = SparseMatrix::identity(3);
        let expect = f.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((dual_norm(&f, &id, &mask).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn indefinite_gram_is_reported() {
        let g = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, -2.0)]);
        assert!(matches!(dual_norm(&[1.0, 1.0], &g, &[true, true]), Err(Error::IndefiniteGram)));
        // the masked block alone is fine
        assert!((dual_norm(&[1.0, 1.0], &g, &[true, false]).unwrap() - 1.0).abs() < 1e-15);
    }
}
