//! Dense symmetric eigensolver wrapper with a fixed ordering and sign
//! convention, so every downstream spectrum and rate is reproducible
//! bit-for-bit across runs and thread counts.

use nalgebra::{DMatrix, DVector};

use crate::error::{ModelError, Result};

/// Eigendecomposition of a real symmetric matrix.
///
/// Eigenvalues are ascending; `vectors.column(k)` belongs to `values[k]`.
/// Each eigenvector is normalized and its largest-magnitude component is
/// made positive (ties broken by the lowest index), which pins the overall
/// sign left free by the eigenproblem.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Eigenvector `k` as a column view.
    pub fn vector(&self, k: usize) -> DVector<f64> {
        self.vectors.column(k).into_owned()
    }
}

/// Diagonalize a real symmetric matrix.
///
/// The input is symmetrized as `(M + M^T)/2` before solving so that tiny
/// asymmetries from accumulated rounding cannot leak into the result.
pub fn eigh(mat: &DMatrix<f64>) -> Result<EigenDecomposition> {
    let n = mat.nrows();
    if n == 0 || mat.ncols() != n {
        return Err(ModelError::invalid(
            "matrix",
            format!("expected square nonempty matrix, got {}x{}", n, mat.ncols()),
        ));
    }
    let sym = (mat + mat.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::try_new(sym, f64::EPSILON, 0)
        .ok_or(ModelError::EigenFailure { dim: n })?;

    // Sort ascending by eigenvalue; the permutation is applied to columns.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .expect("symmetric eigenvalues are finite")
    });

    let mut values = Vec::with_capacity(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(eig.eigenvalues[src]);
        let mut col = eig.eigenvectors.column(src).into_owned();
        // Sign convention: largest-|component| entry positive.
        let mut lead = 0;
        for i in 1..n {
            if col[i].abs() > col[lead].abs() {
                lead = i;
            }
        }
        if col[lead] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    Ok(EigenDecomposition { values, vectors })
}
