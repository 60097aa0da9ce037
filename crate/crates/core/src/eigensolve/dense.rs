use nalgebra::{DMatrix, SymmetricEigen};

use super::{finish, EigenResult};
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

pub const DENSE_LIMIT: usize = 2000;

/// Full spectrum of the pencil (K, M) by Cholesky reduction to a standard
/// symmetric problem. Returns the smallest `count` pairs.
pub fn dense_pencil(k: &CsrMatrix, m: &CsrMatrix, count: usize) -> Result<EigenResult> {
    let n = k.nrows();
    if n > DENSE_LIMIT {
        return Err(Error::SizeLimit {
            n,
            limit: DENSE_LIMIT,
        });
    }
    if n == 0 {
        return Err(Error::DegenerateInput("empty pencil".into()));
    }
    let kd = k.to_dense();
    let md = m.to_dense();
    let chol = md
        .clone()
        .cholesky()
        .ok_or_else(|| Error::DegenerateInput("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    // C = L⁻¹ K L⁻ᵀ
    let y = l
        .solve_lower_triangular(&kd)
        .ok_or_else(|| Error::DegenerateInput("singular Cholesky factor".into()))?;
    let c = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::DegenerateInput("singular Cholesky factor".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let count = count.min(n);
    let mut z = DMatrix::zeros(n, count);
    let mut values = Vec::with_capacity(count);
    for (j, &i) in order.iter().take(count).enumerate() {
        z.set_column(j, &eig.eigenvectors.column(i));
        values.push(eig.eigenvalues[i]);
    }
    let x = l
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::DegenerateInput("singular Cholesky factor".into()))?;
    Ok(finish(k, m, values, x, 0, 0.0, "dense"))
}
