//! Submanifolds given as zero sets of frozen-pivot constraint chains.
//!
//! Level `j` of a chart contributes constraints `c_j = L_j(x) b_j(x)`, where
//! `L_j` is a frozen-pivot left annihilator of a matrix `A_j(x)`. Both `A_j`
//! and `b_j` may depend on the Jacobian of all earlier constraints, which is
//! why every level is evaluated on jets one order higher than the next.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::expr::{jet_jacobian, Jet};
use crate::model::AnalysisConfig;
use crate::numlin::{lstsq, nullspace, stack_rows, with_point, FrozenPivots, Mat};

/// The data each level annihilates.
pub trait ChartRule: Send + Sync {
    type Base;
    fn n(&self) -> usize;
    fn expand_base(&self, x: &[f64], order: usize) -> Result<Self::Base>;
    /// `(A_j, b_j)` at `order`, given the Jacobian `dc` of the constraints of levels `< j`.
    fn system(&self, base: &Self::Base, level: usize, order: usize, dc: &Mat<Jet>) -> Result<(Mat<Jet>, Vec<Jet>)>;
}

#[derive(Clone, Debug)]
pub struct Level {
    pub pivots: FrozenPivots,
    /// Annihilator rows kept as independent constraints.
    pub keep: Vec<usize>,
}

pub struct Chart<R> {
    rule: Arc<R>,
    levels: Vec<Level>,
    base_point: Vec<f64>,
}

impl<R> Clone for Chart<R> {
    fn clone(&self) -> Self {
        Chart { rule: self.rule.clone(), levels: self.levels.clone(), base_point: self.base_point.clone() }
    }
}

/// Jets of a chart evaluated at one point.
pub struct ChartJets {
    /// All annihilated rows of every level.
    pub levels: Vec<Vec<Jet>>,
    /// Kept constraints, level by level.
    pub kept: Vec<Jet>,
    /// Jacobian of `kept`.
    pub dc: Mat<Jet>,
    /// `(A, b)` of the level after the last one, when requested.
    pub next: Option<(Mat<Jet>, Vec<Jet>)>,
}

impl<R: ChartRule> Chart<R> {
    pub fn new(rule: Arc<R>, base_point: Vec<f64>) -> Self {
        Chart { rule, levels: Vec::new(), base_point }
    }

    pub fn rule(&self) -> &Arc<R> {
        &self.rule
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn base_point(&self) -> &[f64] {
        &self.base_point
    }

    pub fn n(&self) -> usize {
        self.rule.n()
    }

    pub fn codim(&self) -> usize {
        self.levels.iter().map(|l| l.keep.len()).sum()
    }

    pub fn dim(&self) -> usize {
        self.n() - self.codim()
    }

    pub fn extend(&self, level: Level) -> Self {
        let mut c = self.clone();
        c.levels.push(level);
        c
    }

    /// Evaluates all levels so that the kept constraints carry at least
    /// `order` (and the next system exactly `order` when `with_next`).
    pub fn evaluate(&self, x: &[f64], order: usize, with_next: bool) -> Result<ChartJets> {
        let n = self.n();
        let depth = self.levels.len() + usize::from(with_next);
        let base = self.rule.expand_base(x, order + depth.saturating_sub(1))?;
        let mut dc: Mat<Jet> = Mat::zeros(0, n);
        let mut kept = Vec::with_capacity(self.codim());
        let mut all = Vec::with_capacity(self.levels.len());
        for (idx, level) in self.levels.iter().enumerate() {
            let j = idx + 1;
            let oj = order + depth - j;
            let (a, b) = self.rule.system(&base, j, oj, &dc)?;
            let l = level.pivots.annihilator(&a).map_err(|e| with_point(e, x))?;
            let c = l.matvec(&b);
            let new: Vec<Jet> = level.keep.iter().map(|&r| c[r].clone()).collect();
            if !new.is_empty() {
                dc = dc.vstack(&jet_jacobian(&new, n));
            }
            kept.extend(new);
            all.push(c);
        }
        let next = if with_next { Some(self.rule.system(&base, depth, order, &dc)?) } else { None };
        Ok(ChartJets { levels: all, kept, dc, next })
    }

    /// Constraint values and Jacobian at `x`.
    pub fn constraints(&self, x: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let n = self.n();
        if self.levels.is_empty() {
            return Ok((DVector::zeros(0), DMatrix::zeros(0, n)));
        }
        let ev = self.evaluate(x, 1, false)?;
        let c = DVector::from_iterator(ev.kept.len(), ev.kept.iter().map(Jet::value));
        let mut j = DMatrix::zeros(ev.kept.len(), n);
        for (i, k) in ev.kept.iter().enumerate() {
            for (v, g) in k.gradient(n).into_iter().enumerate() {
                j[(i, v)] = g;
            }
        }
        Ok((c, j))
    }

    /// Largest residual over every annihilated row (kept or not).
    pub fn full_residual(&self, x: &[f64]) -> Result<f64> {
        if self.levels.is_empty() {
            return Ok(0.0);
        }
        let ev = self.evaluate(x, 0, false)?;
        Ok(ev.levels.iter().flatten().map(|j| j.value().abs()).fold(0.0, f64::max))
    }

    /// Gauss-Newton projection with backtracking, at most 50 iterations.
    pub fn project(&self, x0: &[f64], cfg: &AnalysisConfig) -> Result<Vec<f64>> {
        if self.levels.is_empty() {
            return Ok(x0.to_vec());
        }
        gauss_newton(x0, cfg, |x| self.constraints(x))
    }

    /// Random points at distance `radius` from `center` along tangent directions,
    /// projected back onto the chart.
    pub fn sample<G: Rng>(&self, center: &[f64], count: usize, radius: f64, rng: &mut G, cfg: &AnalysisConfig) -> Result<Vec<Vec<f64>>> {
        let n = self.n();
        let tangent = if self.levels.is_empty() {
            DMatrix::identity(n, n)
        } else {
            nullspace(&self.constraints(center)?.1).basis().clone()
        };
        let d = tangent.ncols();
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            if d == 0 {
                out.push(center.to_vec());
                continue;
            }
            let coef = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
            let mut u = &tangent * coef;
            let norm = u.norm();
            if norm == 0.0 {
                u = tangent.column(0).into_owned();
            } else {
                u /= norm;
            }
            let y: Vec<f64> = center.iter().zip(u.iter()).map(|(a, b)| a + radius * b).collect();
            out.push(self.project(&y, cfg)?);
        }
        Ok(out)
    }

    /// Jacobian of the kept constraints as an f64 matrix, from evaluated jets.
    pub fn dc_values(ev: &ChartJets, n: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(ev.kept.len(), n);
        for (i, k) in ev.kept.iter().enumerate() {
            for (v, g) in k.gradient(n).into_iter().enumerate() {
                m[(i, v)] = g;
            }
        }
        m
    }

    /// Stacks two Jacobians.
    pub fn stacked(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        stack_rows(a, b)
    }
}

/// Drives `c(x)` to zero from `x0` by least-squares Gauss-Newton steps with
/// backtracking; fails unless the residual ends below `tol_residual`.
pub fn gauss_newton(
    x0: &[f64],
    cfg: &AnalysisConfig,
    c_of: impl Fn(&[f64]) -> Result<(DVector<f64>, DMatrix<f64>)>,
) -> Result<Vec<f64>> {
    let mut x = x0.to_vec();
    let (mut c, mut jac) = c_of(&x)?;
    for _ in 0..50 {
        let r = c.norm();
        if r <= cfg.projection_tol {
            return Ok(x);
        }
        let (dx, _, _) = lstsq(&jac, &c, cfg.tol_rank);
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-6 {
            let trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, d)| a - t * d).collect();
            if let Ok((ct, jt)) = c_of(&trial) {
                if ct.norm() < r {
                    x = trial;
                    c = ct;
                    jac = jt;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let r = c.norm();
    if r <= cfg.tol_residual {
        Ok(x)
    } else {
        Err(Error::NotConverged(format!("projection onto the constraint manifold stalled at residual {r:.3e} (start {x0:?})")))
    }
}
