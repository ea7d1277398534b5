use std::sync::Arc;

use nalgebra::DMatrix;

use super::{Expr, Jet};
use crate::error::{Error, Result};
use crate::numlin::Mat;
use crate::scalar::Scalar;

/// A smooth map `R^n -> R^m` that can produce its Taylor expansion at a point.
///
/// This is the common currency of the analysis: expression vectors implement
/// it directly, and composite maps built from frozen-pivot factorizations
/// (explicitation fields, constraint maps) implement it by running their
/// linear algebra on [`Jet`]s.
pub trait SmoothMap: Send + Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    /// Taylor expansion of every output around `x`, truncated at `order`.
    fn expand(&self, x: &[f64], order: usize) -> Result<Vec<Jet>>;
}

pub type VectorField = Arc<dyn SmoothMap>;

/// Componentwise values at `x`.
pub fn eval(map: &dyn SmoothMap, x: &[f64]) -> Result<Vec<f64>> {
    check_dim(map, x)?;
    Ok(values(&map.expand(x, 0)?))
}

/// Exact Jacobian at `x` (rows = outputs).
pub fn jacobian(map: &dyn SmoothMap, x: &[f64]) -> Result<DMatrix<f64>> {
    check_dim(map, x)?;
    let j = map.expand(x, 1)?;
    let n = x.len();
    Ok(DMatrix::from_fn(j.len(), n, |i, k| j[i].gradient(n)[k]))
}

pub fn values(jets: &[Jet]) -> Vec<f64> {
    jets.iter().map(Jet::value).collect()
}

fn check_dim(map: &dyn SmoothMap, x: &[f64]) -> Result<()> {
    if x.len() != map.dim_in() {
        return Err(Error::Dimension(format!("point has {} entries, map expects {}", x.len(), map.dim_in())));
    }
    Ok(())
}

/// `[X, Y](x) = DY(x) X(x) - DX(x) Y(x)`.
pub fn lie_bracket(xf: &dyn SmoothMap, yf: &dyn SmoothMap, x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if xf.dim_out() != n || yf.dim_out() != n || xf.dim_in() != n || yf.dim_in() != n {
        return Err(Error::Dimension("lie bracket needs two vector fields on the same space".into()));
    }
    let a = xf.expand(x, 1)?;
    let b = yf.expand(x, 1)?;
    Ok(values(&jet_bracket(&a, &b)))
}

/// `L_f^k h(x)` for a scalar map `h`; orders above `n` are rejected.
pub fn lie_derivative(h: &dyn SmoothMap, f: &dyn SmoothMap, x: &[f64], k: usize) -> Result<f64> {
    let n = x.len();
    if h.dim_out() != 1 || f.dim_out() != n {
        return Err(Error::Dimension("lie derivative needs a scalar map and a vector field".into()));
    }
    if k > n {
        return Err(Error::Unsupported(format!("lie derivative order {k} exceeds the state dimension {n}")));
    }
    let mut phi = h.expand(x, k)?.remove(0);
    let fj = f.expand(x, k)?;
    for _ in 0..k {
        phi = jet_lie_derivative(&phi, &fj);
    }
    Ok(phi.value())
}

/// Jacobian of jets; each entry loses one order.
pub fn jet_jacobian(f: &[Jet], n: usize) -> Mat<Jet> {
    Mat::from_fn(f.len(), n, |i, k| f[i].derivative(k))
}

/// `sum_v d(phi)/dx_v f_v`.
pub fn jet_lie_derivative(phi: &Jet, f: &[Jet]) -> Jet {
    let mut acc = Jet::constant(0.0);
    for (v, fv) in f.iter().enumerate() {
        acc = acc + phi.derivative(v) * fv.clone();
    }
    acc
}

/// Lie bracket on jets, one order lower than the inputs.
pub fn jet_bracket(a: &[Jet], b: &[Jet]) -> Vec<Jet> {
    let n = a.len();
    (0..n)
        .map(|i| {
            let mut acc = Jet::constant(0.0);
            for v in 0..n {
                acc = acc + b[i].derivative(v) * a[v].clone() - a[i].derivative(v) * b[v].clone();
            }
            acc
        })
        .collect()
}

/// A vector of expressions over `n` states.
#[derive(Clone, Debug, PartialEq)]
pub struct ExprMap {
    n: usize,
    exprs: Vec<Expr>,
}

impl ExprMap {
    pub fn new(n: usize, exprs: Vec<Expr>) -> Result<ExprMap> {
        if let Some(bad) = exprs.iter().filter_map(Expr::max_var).find(|&v| v >= n) {
            return Err(Error::Dimension(format!("variable index {bad} outside {n} states")));
        }
        Ok(ExprMap { n, exprs })
    }

    pub fn exprs(&self) -> &[Expr] {
        &self.exprs
    }

    /// Evaluation on any scalar type.
    pub fn eval_on<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        self.exprs
            .iter()
            .enumerate()
            .map(|(component, e)| e.eval(x).map_err(|kind| Error::Domain { component, kind }))
            .collect()
    }
}

impl SmoothMap for ExprMap {
    fn dim_in(&self) -> usize {
        self.n
    }
    fn dim_out(&self) -> usize {
        self.exprs.len()
    }
    fn expand(&self, x: &[f64], order: usize) -> Result<Vec<Jet>> {
        let seeds = Jet::seed(x, order);
        self.eval_on(&seeds)
    }
}

/// A constant map.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstMap {
    pub n: usize,
    pub value: Vec<f64>,
}

impl SmoothMap for ConstMap {
    fn dim_in(&self) -> usize {
        self.n
    }
    fn dim_out(&self) -> usize {
        self.value.len()
    }
    fn expand(&self, _x: &[f64], _order: usize) -> Result<Vec<Jet>> {
        Ok(self.value.iter().map(|&v| Jet::constant(v)).collect())
    }
}
