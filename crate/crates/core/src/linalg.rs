//! Dense helpers shared by the eigensolvers and the integrator.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use nalgebra_sparse::CsrMatrix;

use crate::error::{FsiError, Result};

/// Symmetric eigendecomposition with eigenpairs sorted ascending.
pub fn sorted_symmetric_eigen(
    mat: DMatrix<f64>,
    kind: &'static str,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = mat.nrows();
    let eig = SymmetricEigen::try_new(mat, 1e-15, 0).ok_or(FsiError::EigenNonConvergence {
        kind,
        residual: f64::NAN,
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .total_cmp(&eig.eigenvalues[b])
            .then(a.cmp(&b))
    });
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// Flip `v` so that its first non-negligible component is positive.
pub fn fix_sign(v: &mut DVector<f64>) {
    let scale = v.amax();
    if scale == 0.0 {
        return;
    }
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-8 * scale) {
        if *first < 0.0 {
            v.neg_mut();
        }
    }
}

/// Sparse times dense.
pub fn csr_dense(a: &CsrMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.ncols(), b.nrows());
    let mut out = DMatrix::zeros(a.nrows(), b.ncols());
    for (r, row) in a.row_iter().enumerate() {
        for (&c, &v) in row.col_indices().iter().zip(row.values()) {
            for k in 0..b.ncols() {
                out[(r, k)] += v * b[(c, k)];
            }
        }
    }
    out
}

/// Select a subset of columns of a sparse matrix.
pub fn csr_select_columns(a: &CsrMatrix<f64>, cols: &[usize]) -> CsrMatrix<f64> {
    let mut map = vec![usize::MAX; a.ncols()];
    for (new, &old) in cols.iter().enumerate() {
        map[old] = new;
    }
    let mut coo = nalgebra_sparse::CooMatrix::new(a.nrows(), cols.len());
    for (r, c, &v) in a.triplet_iter() {
        if map[c] != usize::MAX {
            coo.push(r, map[c], v);
        }
    }
    CsrMatrix::from(&coo)
}

/// Scale rows of a sparse matrix by `d`.
pub fn csr_scale_rows(a: &CsrMatrix<f64>, d: &DVector<f64>) -> CsrMatrix<f64> {
    let mut out = a.clone();
    for (r, mut row) in out.row_iter_mut().enumerate() {
        let s = d[r];
        row.values_mut().iter_mut().for_each(|v| *v *= s);
    }
    out
}
