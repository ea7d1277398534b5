use std::sync::Arc;

use nalgebra::DMatrix;

use super::{condition_number, numerical_rank, Mat};
use crate::error::{Error, Result};
use crate::expr::{values, Jet, SmoothMap, VectorField};
use crate::scalar::Scalar;

/// Pivot rows and columns of a rank-`q` matrix, chosen once at a base point.
///
/// All factorizations built from the same pivots are rational in the matrix
/// entries and hence smooth wherever the pivot block stays invertible.
#[derive(Clone, Debug, PartialEq)]
pub struct FrozenPivots {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub nrows: usize,
    pub ncols: usize,
    pub bound: f64,
}

impl FrozenPivots {
    /// Complete-pivoting elimination on `a` for `rank` steps.
    pub fn select(a: &DMatrix<f64>, rank: usize, bound: f64) -> Result<FrozenPivots> {
        let (m, n) = a.shape();
        let mut w = a.clone();
        let mut rows = Vec::with_capacity(rank);
        let mut cols = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut best = (0, 0, -1.0);
            for i in (0..m).filter(|i| !rows.contains(i)) {
                for j in (0..n).filter(|j| !cols.contains(j)) {
                    let v = w[(i, j)].abs();
                    if v > best.2 {
                        best = (i, j, v);
                    }
                }
            }
            let (p, q, v) = best;
            if v <= 0.0 {
                return Err(Error::Assumption("pivot selection ran out of nonzero pivots".into()));
            }
            for i in (0..m).filter(|&i| i != p && !rows.contains(&i)) {
                let f = w[(i, q)] / w[(p, q)];
                for j in 0..n {
                    w[(i, j)] -= f * w[(p, j)];
                }
            }
            rows.push(p);
            cols.push(q);
        }
        let fp = FrozenPivots { rows, cols, nrows: m, ncols: n, bound };
        let cond = condition_number(&fp.block_re(a));
        if cond > bound {
            return Err(Error::Conditioning { what: "pivot block at the base point".into(), cond, bound, at: Vec::new() });
        }
        Ok(fp)
    }

    /// Chooses the rank from an SVD decision and then selects pivots.
    pub fn at(a: &DMatrix<f64>, tol_rank: Option<f64>, bound: f64) -> Result<FrozenPivots> {
        let q = numerical_rank(a, tol_rank)?.rank;
        FrozenPivots::select(a, q, bound)
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn free_rows(&self) -> Vec<usize> {
        (0..self.nrows).filter(|i| !self.rows.contains(i)).collect()
    }

    pub fn free_cols(&self) -> Vec<usize> {
        (0..self.ncols).filter(|j| !self.cols.contains(j)).collect()
    }

    fn block_re(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.rank(), self.rank(), |i, j| a[(self.rows[i], self.cols[j])])
    }

    fn shape_check<S: Scalar>(&self, a: &Mat<S>) -> Result<()> {
        if a.rows() != self.nrows || a.cols() != self.ncols {
            return Err(Error::Dimension(format!(
                "matrix is {}x{}, pivots were frozen for {}x{}",
                a.rows(),
                a.cols(),
                self.nrows,
                self.ncols
            )));
        }
        Ok(())
    }

    /// Pivot block `B = A[R, C]`, checked against the condition bound.
    fn block<S: Scalar>(&self, a: &Mat<S>) -> Result<Mat<S>> {
        self.shape_check(a)?;
        let b = a.select(&self.rows, &self.cols);
        let cond = condition_number(&b.re());
        if cond > self.bound {
            return Err(Error::Conditioning { what: "frozen pivot block".into(), cond, bound: self.bound, at: Vec::new() });
        }
        Ok(b)
    }

    /// `B^{-1} rhs`, short-circuiting an identically zero right-hand side.
    fn solve_block<S: Scalar>(&self, b: &Mat<S>, rhs: &Mat<S>) -> Result<Mat<S>> {
        if rhs.clone().into_data().iter().all(|v| v.is_zero()) {
            return Ok(Mat::zeros(rhs.rows(), rhs.cols()));
        }
        b.solve(rhs).ok_or_else(|| Error::Conditioning {
            what: "frozen pivot block".into(),
            cond: f64::INFINITY,
            bound: self.bound,
            at: Vec::new(),
        })
    }

    /// Rows `e_i - A[i,C] B^{-1} e_R` for every non-pivot row `i`:
    /// an `(m - q) x m` smooth left annihilator of `A`.
    pub fn annihilator<S: Scalar>(&self, a: &Mat<S>) -> Result<Mat<S>> {
        self.shape_check(a)?;
        let free = self.free_rows();
        let mut l = Mat::zeros(free.len(), self.nrows);
        for (k, &i) in free.iter().enumerate() {
            l[(k, i)] = S::one();
        }
        if self.rank() == 0 || free.is_empty() {
            return Ok(l);
        }
        let an = a.select(&free, &self.cols);
        if an.clone().into_data().iter().all(|v| v.is_zero()) {
            return Ok(l);
        }
        let b = self.block(a)?;
        // Y = An B^{-1}  <=>  B^T Y^T = An^T
        let yt = self.solve_block(&b.transpose(), &an.transpose())?;
        for (k, _) in free.iter().enumerate() {
            for (r, &pi) in self.rows.iter().enumerate() {
                l[(k, pi)] = -yt[(r, k)].clone();
            }
        }
        Ok(l)
    }

    /// `n x (n - q)` smooth kernel basis `[-B^{-1} A[R,F]; I]` in the pivot/free split.
    pub fn kernel<S: Scalar>(&self, a: &Mat<S>) -> Result<Mat<S>> {
        self.shape_check(a)?;
        let free = self.free_cols();
        let mut k = Mat::zeros(self.ncols, free.len());
        for (c, &j) in free.iter().enumerate() {
            k[(j, c)] = S::one();
        }
        if self.rank() == 0 || free.is_empty() {
            return Ok(k);
        }
        let b = self.block(a)?;
        let nf = a.select(&self.rows, &free);
        let x = self.solve_block(&b, &nf)?;
        for (r, &pc) in self.cols.iter().enumerate() {
            for c in 0..free.len() {
                k[(pc, c)] = -x[(r, c)].clone();
            }
        }
        Ok(k)
    }

    /// `n x q` right inverse of the pivot rows `A[R,:]`: `[B^{-1}; 0]` in the pivot split.
    pub fn right_inverse<S: Scalar>(&self, a: &Mat<S>) -> Result<Mat<S>> {
        let b = self.block(a)?;
        let binv = self.solve_block(&b, &Mat::identity(self.rank()))?;
        let mut r = Mat::zeros(self.ncols, self.rank());
        for (i, &pc) in self.cols.iter().enumerate() {
            for j in 0..self.rank() {
                r[(pc, j)] = binv[(i, j)].clone();
            }
        }
        Ok(r)
    }

    /// Invertible `Q` with `Q A = [A[R,:]; 0]`: pivot-row selectors on top,
    /// annihilator rows below.
    pub fn compressor<S: Scalar>(&self, a: &Mat<S>) -> Result<Mat<S>> {
        let mut top = Mat::zeros(self.rank(), self.nrows);
        for (k, &i) in self.rows.iter().enumerate() {
            top[(k, i)] = S::one();
        }
        Ok(top.vstack(&self.annihilator(a)?))
    }
}

/// Matrix-valued smooth map stored as a row-major vector map.
#[derive(Clone)]
pub struct MatrixMap {
    pub rows: usize,
    pub cols: usize,
    pub map: VectorField,
}

impl std::fmt::Debug for MatrixMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "MatrixMap({}x{})", self.rows, self.cols)
    }
}

impl MatrixMap {
    pub fn new(rows: usize, cols: usize, map: VectorField) -> Result<MatrixMap> {
        if map.dim_out() != rows * cols {
            return Err(Error::Dimension(format!("map has {} outputs, expected {}x{}", map.dim_out(), rows, cols)));
        }
        Ok(MatrixMap { rows, cols, map })
    }

    pub fn dim_in(&self) -> usize {
        self.map.dim_in()
    }

    pub fn expand(&self, x: &[f64], order: usize) -> Result<Mat<Jet>> {
        Ok(Mat::from_vec(self.rows, self.cols, self.map.expand(x, order)?))
    }

    pub fn value(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let v = values(&self.map.expand(x, 0)?);
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &v))
    }

    /// The `j`-th column as a vector field.
    pub fn column_field(&self, j: usize) -> VectorField {
        Arc::new(Column { m: self.clone(), j })
    }
}

struct Column {
    m: MatrixMap,
    j: usize,
}

impl SmoothMap for Column {
    fn dim_in(&self) -> usize {
        self.m.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.m.rows
    }
    fn expand(&self, x: &[f64], order: usize) -> Result<Vec<Jet>> {
        Ok(self.m.expand(x, order)?.col(self.j))
    }
}

#[derive(Clone, Copy)]
enum Product {
    Compressor,
    Kernel,
    RightInverse,
}

/// Smooth matrix map obtained by a frozen-pivot construction on another map.
struct Derived {
    src: MatrixMap,
    pivots: FrozenPivots,
    kind: Product,
}

impl Derived {
    fn shape(&self) -> (usize, usize) {
        let p = &self.pivots;
        match self.kind {
            Product::Compressor => (p.nrows, p.nrows),
            Product::Kernel => (p.ncols, p.ncols - p.rank()),
            Product::RightInverse => (p.ncols, p.rank()),
        }
    }
}

impl SmoothMap for Derived {
    fn dim_in(&self) -> usize {
        self.src.dim_in()
    }
    fn dim_out(&self) -> usize {
        let (r, c) = self.shape();
        r * c
    }
    fn expand(&self, x: &[f64], order: usize) -> Result<Vec<Jet>> {
        let a = self.src.expand(x, order)?;
        let m = match self.kind {
            Product::Compressor => self.pivots.compressor(&a),
            Product::Kernel => self.pivots.kernel(&a),
            Product::RightInverse => self.pivots.right_inverse(&a),
        }
        .map_err(|e| with_point(e, x))?;
        Ok(m.into_data())
    }
}

/// Fills the evaluation point into conditioning errors.
pub(crate) fn with_point(e: Error, x: &[f64]) -> Error {
    match e {
        Error::Conditioning { what, cond, bound, at } if at.is_empty() => {
            Error::Conditioning { what, cond, bound, at: x.to_vec() }
        }
        other => other,
    }
}

fn derived(src: &MatrixMap, pivots: FrozenPivots, kind: Product) -> Result<MatrixMap> {
    let d = Derived { src: src.clone(), pivots, kind };
    let (r, c) = d.shape();
    MatrixMap::new(r, c, Arc::new(d))
}

/// Row compression `Q(x) E(x) = [E1(x); 0]` frozen at a base point.
#[derive(Clone, Debug)]
pub struct SmoothRowCompressor {
    pub base_point: Vec<f64>,
    pub pivots: FrozenPivots,
    pub q: MatrixMap,
}

impl SmoothRowCompressor {
    pub fn rank(&self) -> usize {
        self.pivots.rank()
    }

    pub fn apply(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.q.value(x)
    }
}

pub fn row_compress(e: &MatrixMap, base: &[f64], tol_rank: Option<f64>, bound: f64) -> Result<SmoothRowCompressor> {
    let pivots = FrozenPivots::at(&e.value(base)?, tol_rank, bound).map_err(|er| with_point(er, base))?;
    let q = derived(e, pivots.clone(), Product::Compressor)?;
    Ok(SmoothRowCompressor { base_point: base.to_vec(), pivots, q })
}

/// Smooth basis of `ker E(x)` as the columns of an `n x (n - q)` map.
pub fn kernel_basis(e: &MatrixMap, base: &[f64], tol_rank: Option<f64>, bound: f64) -> Result<MatrixMap> {
    let pivots = FrozenPivots::at(&e.value(base)?, tol_rank, bound).map_err(|er| with_point(er, base))?;
    derived(e, pivots, Product::Kernel)
}

/// Smooth right inverse of a full-row-rank map.
pub fn right_inverse(e1: &MatrixMap, base: &[f64], tol_rank: Option<f64>, bound: f64) -> Result<MatrixMap> {
    let pivots = FrozenPivots::at(&e1.value(base)?, tol_rank, bound).map_err(|er| with_point(er, base))?;
    if pivots.rank() != e1.rows {
        return Err(Error::Assumption(format!("right inverse needs full row rank {}, found {}", e1.rows, pivots.rank())));
    }
    derived(e1, pivots, Product::RightInverse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_expression, ExprMap};

    fn matmap(rows: usize, cols: usize, n: usize, entries: &[&str]) -> MatrixMap {
        let names: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        let exprs = entries.iter().map(|t| parse_expression(t, &names).unwrap()).collect();
        MatrixMap::new(rows, cols, Arc::new(ExprMap::new(n, exprs).unwrap())).unwrap()
    }

    #[test]
    fn compressor_of_already_compressed_matrix() {
        let e = matmap(2, 2, 2, &["1", "0", "0", "0"]);
        let c = row_compress(&e, &[0.0, 0.0], None, 1e8).unwrap();
        assert_eq!(c.apply(&[0.3, 0.4]).unwrap(), DMatrix::identity(2, 2));
    }

    #[test]
    fn kernel_of_row_vector() {
        let e = matmap(1, 2, 1, &["1", "0"]);
        let k = kernel_basis(&e, &[0.0], None, 1e8).unwrap();
        assert_eq!(k.value(&[5.0]).unwrap(), DMatrix::from_row_slice(2, 1, &[0.0, 1.0]));
    }

    #[test]
    fn right_inverse_of_rotating_row() {
        let e = matmap(1, 3, 3, &["sin(x3)", "-cos(x3)", "0"]);
        let x = [0.0, 0.0, std::f64::consts::FRAC_PI_2];
        let r = right_inverse(&e, &x, None, 1e8).unwrap();
        let rv = r.value(&x).unwrap();
        assert!((rv[(0, 0)] - 1.0).abs() < 1e-15);
        for t in [1.2, 1.6, 2.0] {
            let y = [0.0, 0.0, t];
            let p = e.value(&y).unwrap() * r.value(&y).unwrap();
            assert!((p[(0, 0)] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn annihilator_kills_columns() {
        let a = Mat::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 4.0, 6.0]);
        let p = FrozenPivots::at(&a.re(), None, 1e8).unwrap();
        assert_eq!(p.rank(), 2);
        let l = p.annihilator(&a).unwrap();
        let z = l.matmul(&a);
        assert!(z.into_data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn derivatives_flow_through_kernel() {
        // ker [x1, 1] = span (1, -x1) with pivot on the second column
        let e = matmap(1, 2, 1, &["x1", "1"]);
        let k = kernel_basis(&e, &[0.5], None, 1e8).unwrap();
        let j = k.expand(&[0.5], 1).unwrap();
        assert_eq!(j[(0, 0)].value(), 1.0);
        assert!((j[(1, 0)].value() + 0.5).abs() < 1e-15);
        assert!((j[(1, 0)].gradient(1)[0] + 1.0).abs() < 1e-15);
    }
}
