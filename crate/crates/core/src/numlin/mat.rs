use nalgebra::DMatrix;

use crate::scalar::Scalar;

/// Small dense row-major matrix over any [`Scalar`].
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Mat { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn column(v: Vec<S>) -> Self {
        let n = v.len();
        Mat::from_vec(n, 1, v)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<S> {
        (0..self.rows).map(|i| self[(i, j)].clone()).collect()
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    pub fn transpose(&self) -> Self {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)].clone())
    }

    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        Mat::from_fn(rows.len(), cols.len(), |i, j| self[(rows[i], cols[j])].clone())
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Mat::from_fn(rows.len(), self.cols, |i, j| self[(rows[i], j)].clone())
    }

    pub fn select_cols(&self, cols: &[usize]) -> Self {
        Mat::from_fn(self.rows, cols.len(), |i, j| self[(i, cols[j])].clone())
    }

    /// Stacks `self` on top of `below`.
    pub fn vstack(&self, below: &Mat<S>) -> Self {
        assert!(self.cols == below.cols || self.rows == 0 || below.rows == 0, "vstack column mismatch");
        let cols = if self.rows == 0 { below.cols } else { self.cols };
        let mut data = self.data.clone();
        data.extend(below.data.iter().cloned());
        Mat { rows: self.rows + below.rows, cols, data }
    }

    pub fn hstack(&self, right: &Mat<S>) -> Self {
        assert_eq!(self.rows, right.rows, "hstack row mismatch");
        Mat::from_fn(self.rows, self.cols + right.cols, |i, j| {
            if j < self.cols {
                self[(i, j)].clone()
            } else {
                right[(i, j - self.cols)].clone()
            }
        })
    }

    pub fn matmul(&self, o: &Mat<S>) -> Self {
        assert_eq!(self.cols, o.rows, "matmul shape mismatch");
        Mat::from_fn(self.rows, o.cols, |i, j| {
            let mut acc = S::zero();
            for k in 0..self.cols {
                acc = acc + self[(i, k)].clone() * o[(k, j)].clone();
            }
            acc
        })
    }

    pub fn matvec(&self, v: &[S]) -> Vec<S> {
        assert_eq!(self.cols, v.len(), "matvec shape mismatch");
        (0..self.rows)
            .map(|i| {
                let mut acc = S::zero();
                for (a, b) in self.row(i).iter().zip(v) {
                    acc = acc + a.clone() * b.clone();
                }
                acc
            })
            .collect()
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> Mat<T> {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(f).collect() }
    }

    /// Real parts as an nalgebra matrix.
    pub fn re(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)].re())
    }

    /// Solves `self * X = B` by LU with partial pivoting chosen on real parts.
    /// Returns `None` when a pivot is exactly zero.
    pub fn solve(&self, b: &Mat<S>) -> Option<Mat<S>> {
        assert_eq!(self.rows, self.cols, "solve needs a square matrix");
        assert_eq!(self.rows, b.rows, "solve shape mismatch");
        let n = self.rows;
        let mut a = self.clone();
        let mut x = b.clone();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| a[(i, k)].re().abs().total_cmp(&a[(j, k)].re().abs()))
                .unwrap();
            if a[(p, k)].re() == 0.0 {
                return None;
            }
            if p != k {
                a.swap_rows(p, k);
                x.swap_rows(p, k);
            }
            let inv = S::one() / a[(k, k)].clone();
            for i in k + 1..n {
                if a[(i, k)].re() == 0.0 && a[(i, k)].is_zero() {
                    continue;
                }
                let f = a[(i, k)].clone() * inv.clone();
                for j in k..n {
                    let t = a[(i, j)].clone() - f.clone() * a[(k, j)].clone();
                    a[(i, j)] = t;
                }
                for j in 0..x.cols {
                    let t = x[(i, j)].clone() - f.clone() * x[(k, j)].clone();
                    x[(i, j)] = t;
                }
            }
        }
        for k in (0..n).rev() {
            let inv = S::one() / a[(k, k)].clone();
            for j in 0..x.cols {
                let mut acc = x[(k, j)].clone();
                for i in k + 1..n {
                    acc = acc - a[(k, i)].clone() * x[(i, j)].clone();
                }
                x[(k, j)] = acc * inv.clone();
            }
        }
        Some(x)
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }
}

impl<S> std::ops::Index<(usize, usize)> for Mat<S> {
    type Output = S;
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.cols + j]
    }
}

impl<S> std::ops::IndexMut<(usize, usize)> for Mat<S> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.data[i * self.cols + j]
    }
}

/// nalgebra matrix as a `Mat<f64>`.
pub fn from_dmatrix(m: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}
