//! Full SVD backed by faer. nalgebra's SVD returns wrong factors for some
//! small rank-deficient matrices, so every rank decision goes through here.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub struct Svd {
    /// `m x m`
    pub u: DMatrix<f64>,
    /// Descending, `min(m, n)` entries.
    pub s: DVector<f64>,
    /// `n x n`
    pub v: DMatrix<f64>,
}

pub fn svd(a: &DMatrix<f64>) -> Result<Svd> {
    let (m, n) = a.shape();
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Dimension("matrix has non-finite entries".into()));
    }
    if m == 0 || n == 0 {
        return Ok(Svd { u: DMatrix::identity(m, m), s: DVector::zeros(0), v: DMatrix::identity(n, n) });
    }
    let f = faer::Mat::<f64>::from_fn(m, n, |i, j| a[(i, j)]);
    let d = f.svd().map_err(|e| Error::NotConverged(format!("SVD did not converge: {e:?}")))?;
    let (u, v, s) = (d.U(), d.V(), d.S().column_vector());
    let k = m.min(n);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| s[y].total_cmp(&s[x]));
    let perm = |i: usize| if i < k { order[i] } else { i };
    Ok(Svd {
        u: DMatrix::from_fn(m, m, |i, j| u[(i, perm(j))]),
        s: DVector::from_fn(k, |i, _| s[order[i]]),
        v: DMatrix::from_fn(n, n, |i, j| v[(i, perm(j))]),
    })
}
