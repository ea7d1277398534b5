use nalgebra::DMatrix;

use super::{default_tol_rank, spectral_norm, svd, ABS_RANK_FLOOR};
use crate::error::{Error, Result};

/// Linear subspace of `R^n` held as an orthonormal basis (`n x d`).
#[derive(Clone, Debug, PartialEq)]
pub struct Subspace {
    basis: DMatrix<f64>,
}

impl Subspace {
    pub fn zero(n: usize) -> Subspace {
        Subspace { basis: DMatrix::zeros(n, 0) }
    }

    pub fn full(n: usize) -> Subspace {
        Subspace { basis: DMatrix::identity(n, n) }
    }

    /// Column span of `m`; singular values below `1e-10·max(shape)·scale` are dropped,
    /// with `scale` the magnitude of the data that produced `m`.
    pub fn span_scaled(m: &DMatrix<f64>, scale: f64) -> Subspace {
        let n = m.nrows();
        if m.ncols() == 0 || n == 0 {
            return Subspace::zero(n);
        }
        let d = svd(m).expect("finite matrix");
        let thr = (default_tol_rank(m.nrows(), m.ncols()) * scale).max(ABS_RANK_FLOOR);
        let k = d.s.iter().filter(|&&s| s > thr).count();
        let basis = d.u.columns(0, k).into_owned();
        Subspace { basis }
    }

    /// Column span of `m` with a threshold relative to its own norm.
    pub fn span(m: &DMatrix<f64>) -> Subspace {
        Subspace::span_scaled(m, spectral_norm(m))
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient(&self) -> usize {
        self.basis.nrows()
    }

    pub fn complement(&self) -> Subspace {
        nullspace_scaled(&self.basis.transpose(), 1.0)
    }

    /// Sine of the largest principal angle between equal-dimensional subspaces,
    /// or 1 when dimensions differ.
    pub fn distance(&self, o: &Subspace) -> f64 {
        if self.dim() != o.dim() || self.ambient() != o.ambient() {
            return 1.0;
        }
        if self.dim() == 0 {
            return 0.0;
        }
        let proj = &self.basis * (self.basis.transpose() * &o.basis);
        spectral_norm(&(&o.basis - proj))
    }

    /// Span equality up to principal angles of `1e-8`.
    pub fn same_as(&self, o: &Subspace) -> bool {
        self.distance(o) <= 1e-8
    }

    /// Norm of the component of `v` orthogonal to the subspace.
    pub fn residual(&self, v: &DMatrix<f64>) -> f64 {
        let proj = &self.basis * (self.basis.transpose() * v);
        (v - proj).norm()
    }

    pub fn contains(&self, o: &Subspace) -> bool {
        self.residual(&o.basis) <= 1e-8
    }
}

fn check_ambient(a: &Subspace, b: &Subspace) -> Result<()> {
    if a.ambient() != b.ambient() {
        return Err(Error::Dimension(format!("subspaces of R^{} and R^{}", a.ambient(), b.ambient())));
    }
    Ok(())
}

pub fn subspace_sum(a: &Subspace, b: &Subspace) -> Result<Subspace> {
    check_ambient(a, b)?;
    let n = a.ambient();
    let m = DMatrix::from_fn(n, a.dim() + b.dim(), |i, j| {
        if j < a.dim() {
            a.basis[(i, j)]
        } else {
            b.basis[(i, j - a.dim())]
        }
    });
    Ok(Subspace::span_scaled(&m, 1.0))
}

pub fn subspace_intersect(a: &Subspace, b: &Subspace) -> Result<Subspace> {
    check_ambient(a, b)?;
    let c = subspace_sum(&a.complement(), &b.complement())?;
    Ok(c.complement())
}

/// `A S` for a subspace `S`.
pub fn image(a: &DMatrix<f64>, s: &Subspace) -> Result<Subspace> {
    if a.ncols() != s.ambient() {
        return Err(Error::Dimension("image: matrix columns differ from subspace ambient dimension".into()));
    }
    Ok(Subspace::span_scaled(&(a * &s.basis), spectral_norm(a)))
}

/// `{v : A v in S}`.
pub fn preimage(a: &DMatrix<f64>, s: &Subspace) -> Result<Subspace> {
    if a.nrows() != s.ambient() {
        return Err(Error::Dimension("preimage: matrix rows differ from subspace ambient dimension".into()));
    }
    let c = s.complement();
    Ok(nullspace_scaled(&(c.basis.transpose() * a), spectral_norm(a)))
}

/// Kernel of `a` with a threshold relative to its norm.
pub fn nullspace(a: &DMatrix<f64>) -> Subspace {
    nullspace_scaled(a, spectral_norm(a))
}

fn nullspace_scaled(a: &DMatrix<f64>, scale: f64) -> Subspace {
    let n = a.ncols();
    if a.nrows() == 0 {
        return Subspace::full(n);
    }
    if n == 0 {
        return Subspace::zero(0);
    }
    let d = svd(a).expect("finite matrix");
    let thr = (default_tol_rank(a.nrows(), n) * scale).max(ABS_RANK_FLOOR);
    let rank = d.s.iter().filter(|&&s| s > thr).count();
    let basis = d.v.columns(rank, n - rank).into_owned();
    Subspace { basis }
}
