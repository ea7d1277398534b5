//! Dense linear algebra: rank decisions, frozen-pivot smooth factorizations
//! and subspace arithmetic.

mod mat;
mod smooth;
mod subspace;
mod svd;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use mat::{from_dmatrix, Mat};
pub use smooth::{kernel_basis, right_inverse, row_compress, FrozenPivots, MatrixMap, SmoothRowCompressor};
pub(crate) use smooth::with_point;
pub use svd::{svd, Svd};
pub use subspace::{image, nullspace, preimage, subspace_intersect, subspace_sum, Subspace};

use crate::error::{Error, Result};

/// Outcome of a numerical rank decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankDecision {
    pub rank: usize,
    pub singular_values: Vec<f64>,
    pub threshold: f64,
}

/// Singular values at or below this never count towards a rank.
pub const ABS_RANK_FLOOR: f64 = 1e-14;

/// Relative tolerance used when none is configured.
pub fn default_tol_rank(rows: usize, cols: usize) -> f64 {
    1e-10 * rows.max(cols).max(1) as f64
}

/// Singular values in descending order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    svd(a).map(|d| d.s.iter().copied().collect()).unwrap_or_else(|_| vec![f64::NAN; a.nrows().min(a.ncols())])
}

/// Counts singular values above `tol_rank` times the largest one.
pub fn numerical_rank(a: &DMatrix<f64>, tol_rank: Option<f64>) -> Result<RankDecision> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Dimension("matrix has non-finite entries".into()));
    }
    let tol = tol_rank.unwrap_or_else(|| default_tol_rank(a.nrows(), a.ncols()));
    let singular_values = singular_values(a);
    let smax = singular_values.first().copied().unwrap_or(0.0);
    // Entries at round-off level carry no rank, whatever the relative cut says.
    let threshold = (tol * smax).max(ABS_RANK_FLOOR);
    let rank = singular_values.iter().filter(|&&s| s > threshold && s > 0.0).count();
    Ok(RankDecision { rank, singular_values, threshold })
}

/// 2-norm condition number; infinite for singular input.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

/// Minimum-norm least-squares solution of `a x = b`.
///
/// Returns the solution, the residual norm and the numerical rank used.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>, tol_rank: Option<f64>) -> (DVector<f64>, f64, usize) {
    let n = a.ncols();
    if a.nrows() == 0 || n == 0 {
        return (DVector::zeros(n), b.norm(), 0);
    }
    let Ok(d) = svd(a) else {
        return (DVector::from_element(n, f64::NAN), f64::NAN, 0);
    };
    let tol = tol_rank.unwrap_or_else(|| default_tol_rank(a.nrows(), a.ncols()));
    let smax = d.s.max();
    let thr = (tol * smax).max(ABS_RANK_FLOOR);
    let mut x = DVector::zeros(n);
    let mut rank = 0;
    for (k, &s) in d.s.iter().enumerate() {
        if s > thr && s > 0.0 {
            rank += 1;
            let coef = d.u.column(k).dot(b) / s;
            x += d.v.column(k) * coef;
        }
    }
    let res = (a * &x - b).norm();
    (x, res, rank)
}

/// Greedy selection of rows of `a` that are linearly independent of `base`
/// and of each other; `target` rows are needed in total.
pub fn independent_rows(base: &DMatrix<f64>, a: &DMatrix<f64>, tol_rank: Option<f64>) -> Result<Vec<usize>> {
    let mut acc = base.clone();
    let mut rank = numerical_rank(&acc, tol_rank)?.rank;
    let mut keep = Vec::new();
    for i in 0..a.nrows() {
        let trial = stack_rows(&acc, &a.rows(i, 1).into_owned());
        let r = numerical_rank(&trial, tol_rank)?.rank;
        if r > rank {
            acc = trial;
            rank = r;
            keep.push(i);
        }
    }
    Ok(keep)
}

pub fn stack_rows(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    if a.nrows() == 0 {
        return b.clone();
    }
    if b.nrows() == 0 {
        return a.clone();
    }
    assert_eq!(a.ncols(), b.ncols(), "row stack column mismatch");
    let mut m = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    m.rows_mut(0, a.nrows()).copy_from(a);
    m.rows_mut(a.nrows(), b.nrows()).copy_from(b);
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_matrix_has_rank_zero() {
        let r = numerical_rank(&DMatrix::zeros(3, 4), None).unwrap();
        assert_eq!(r.rank, 0);
    }

    #[test]
    fn product_of_thin_factors() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b = DMatrix::from_fn(5, 2, |_, _| rng.gen_range(-1.0..1.0));
        let c = DMatrix::from_fn(2, 5, |_, _| rng.gen_range(-1.0..1.0));
        assert_eq!(numerical_rank(&(b * c), None).unwrap().rank, 2);
    }

    #[test]
    fn non_finite_rejected() {
        let m = DMatrix::from_row_slice(1, 2, &[1.0, f64::NAN]);
        assert!(numerical_rank(&m, None).is_err());
    }

    #[test]
    fn least_squares_min_norm() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let (x, res, rank) = lstsq(&a, &DVector::from_vec(vec![2.0]), None);
        assert_eq!(rank, 1);
        assert!(res < 1e-14);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn independent_row_selection() {
        let base = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0]);
        assert_eq!(independent_rows(&base, &a, None).unwrap(), vec![1]);
    }
}
