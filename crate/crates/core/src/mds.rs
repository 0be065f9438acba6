//! Classical (Torgerson) multidimensional scaling.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::triangle::UpperTriangle;

/// Embed a dissimilarity matrix in `dim` dimensions by double centering the
/// squared distances and keeping the leading eigenpairs. Negative eigenvalues
/// and numerically null ones are set to zero. Rows of the result are entities.
pub fn classical_mds(d: &UpperTriangle, dim: usize) -> DMatrix<f64> {
    let n = d.n();
    let sq = DMatrix::from_fn(n, n, |i, j| d.get(i, j).powi(2));
    let row_mean: Vec<f64> = (0..n).map(|i| sq.row(i).mean()).collect();
    let grand = sq.mean();
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_mean[i] - row_mean[j] + grand));

    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[c].total_cmp(&eig.eigenvalues[a]));

    let top = eig.eigenvalues[order[0]].max(0.0);
    let dim = dim.min(n);
    DMatrix::from_fn(n, dim, |i, k| {
        let col = order[k];
        let lambda = eig.eigenvalues[col];
        if lambda <= 1e-12 * top {
            0.0
        } else {
            eig.eigenvectors[(i, col)] * lambda.sqrt()
        }
    })
}
