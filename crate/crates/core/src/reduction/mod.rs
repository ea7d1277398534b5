//! Geometric reduction: the chain `M_1 ⊇ M_2 ⊇ ... ⊇ M*`, consistency and
//! internal regularity at a base point, and the reduced dynamics on `M*`.

mod chart;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use chart::{gauss_newton, Chart, ChartJets, ChartRule, Level};

use crate::error::{Error, Result};
use crate::expr::{values, Jet, SmoothMap, VectorField};
use crate::model::{AnalysisConfig, DaeModel};
use crate::numlin::{independent_rows, lstsq, nullspace, numerical_rank, with_point, FrozenPivots, Mat, MatrixMap};

/// `A_k = [E; DC_{k-1}]`, `b_k = [F; 0]`.
pub struct DaeRule {
    e: MatrixMap,
    f: VectorField,
}

impl DaeRule {
    pub fn new(model: &DaeModel) -> DaeRule {
        DaeRule { e: model.e_map(), f: model.f_map() }
    }

    pub fn e(&self) -> &MatrixMap {
        &self.e
    }

    pub fn f(&self) -> &VectorField {
        &self.f
    }
}

impl ChartRule for DaeRule {
    type Base = (Mat<Jet>, Vec<Jet>);

    fn n(&self) -> usize {
        self.e.cols
    }

    fn expand_base(&self, x: &[f64], order: usize) -> Result<Self::Base> {
        Ok((self.e.expand(x, order)?, self.f.expand(x, order)?))
    }

    fn system(&self, base: &Self::Base, _level: usize, order: usize, dc: &Mat<Jet>) -> Result<(Mat<Jet>, Vec<Jet>)> {
        let a = base.0.map(|j| j.truncate(order)).vstack(&dc.map(|j| j.truncate(order)));
        let mut b: Vec<Jet> = base.1.iter().map(|j| j.truncate(order)).collect();
        b.extend((0..dc.rows()).map(|_| Jet::constant(0.0)));
        Ok((a, b))
    }
}

/// Sampled rank range of a step's matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankEvidence {
    pub samples: usize,
    pub radius: f64,
    pub min_rank: usize,
    pub max_rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    pub r_k: usize,
    pub n_k: usize,
    pub new_constraints: usize,
    pub rank_evidence: RankEvidence,
    /// Largest new constraint value at the base point.
    pub residual_at_base: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionTrace {
    pub steps: Vec<StepRecord>,
    pub k_star: usize,
    pub n_star: Option<usize>,
    pub r_star: Option<usize>,
    pub consistent: bool,
    pub internally_regular: bool,
    pub warnings: Vec<String>,
}

impl ReductionTrace {
    pub fn r_chain(&self) -> Vec<usize> {
        self.steps.iter().take(self.k_star).map(|s| s.r_k).collect()
    }

    pub fn n_chain(&self) -> Vec<usize> {
        self.steps.iter().take(self.k_star).map(|s| s.n_k).collect()
    }
}

/// Everything produced by [`run_reduction`].
pub struct Reduction {
    pub trace: ReductionTrace,
    /// Charts of `M_1, ..., M_{k*}` (the last one is `M*` when consistent).
    pub charts: Vec<Chart<DaeRule>>,
    /// Present when the base point is consistent.
    pub reduced: Option<ReducedSystem>,
    whole: Chart<DaeRule>,
}

impl Reduction {
    /// Chart of `M_k`; `k = 0` is the whole space.
    pub fn chart(&self, k: usize) -> Option<&Chart<DaeRule>> {
        if k == 0 {
            return Some(&self.whole);
        }
        self.charts.get(k - 1)
    }
}

fn rank_at(a: &Mat<Jet>, tol: Option<f64>) -> Result<usize> {
    Ok(numerical_rank(&a.re(), tol)?.rank)
}

/// How a chain ended.
pub enum ChainEnd {
    /// No new independent constraints; `rank` is that of the last step.
    Stable { rank: usize },
    /// The base point violates the constraints of the last step.
    Violated,
}

pub struct Chain<R> {
    pub steps: Vec<StepRecord>,
    pub charts: Vec<Chart<R>>,
    pub last: Chart<R>,
    pub warnings: Vec<String>,
    pub end: ChainEnd,
}

/// Settings that differ between the reduction and the zero-dynamics chains.
pub struct ChainSpec {
    /// Manifold symbol used in messages.
    pub symbol: &'static str,
    /// Whether the recorded rank is `rank A_k - codim` (reduction) or `rank A_k`.
    pub subtract_codim: bool,
    /// Scale of the constraint values at the base point.
    pub scale: f64,
}

/// Adds levels to `chart` until no new independent constraint appears.
pub fn grow_chain<R: ChartRule>(mut chart: Chart<R>, cfg: &AnalysisConfig, spec: &ChainSpec) -> Result<Chain<R>> {
    let xp = chart.base_point().to_vec();
    let n = chart.n();
    let sym = spec.symbol;
    let mut rng = cfg.rng();
    let cut = cfg.tol_residual * spec.scale;
    let mut steps = Vec::new();
    let mut charts = Vec::new();
    let mut warnings = Vec::new();
    let mut n_prev = chart.dim();

    for k in 1..=cfg.max_steps_for(n) {
        let mut ev = chart.evaluate(&xp, 1, true)?;
        let (a, b) = ev.next.take().expect("requested");
        let a0 = a.re();
        let rank_a = numerical_rank(&a0, cfg.tol_rank)?.rank;
        let offset = if spec.subtract_codim { chart.codim() } else { 0 };
        let r_k = rank_a - offset;

        let samples = chart.sample(&xp, cfg.samples, cfg.radius, &mut rng, cfg)?;
        let (mut lo, mut hi) = (r_k, r_k);
        for s in &samples {
            let (a_s, _) = chart.evaluate(s, 0, true)?.next.expect("requested");
            let found = rank_at(&a_s, cfg.tol_rank)?;
            let r_s = found.saturating_sub(offset);
            lo = lo.min(r_s);
            hi = hi.max(r_s);
            if found != rank_a {
                return Err(Error::RankNotConstant {
                    what: format!("step {k} matrix on {sym}_{}", k - 1),
                    base: r_k,
                    found: r_s,
                    witness: s.clone(),
                });
            }
        }
        let evidence = RankEvidence { samples: samples.len(), radius: cfg.radius, min_rank: lo, max_rank: hi };

        let pivots = FrozenPivots::select(&a0, rank_a, cfg.condition_bound).map_err(|e| with_point(e, &xp))?;
        let c = pivots.annihilator(&a)?.matvec(&b);
        let residual = values(&c).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut record = StepRecord { k, r_k, n_k: n_prev, new_constraints: 0, rank_evidence: evidence, residual_at_base: residual };

        if residual > cut {
            steps.push(record);
            warnings.push(format!("base point violates the constraints of step {k} (residual {residual:.3e})"));
            return Ok(Chain { steps, charts, last: chart, warnings, end: ChainEnd::Violated });
        }
        if residual > cut / 10.0 {
            warnings.push(format!("step {k}: constraint residual {residual:.3e} at the base point is within 10x of the cut {cut:.3e}"));
        }

        let dc_prev = Chart::<R>::dc_values(&ev, n);
        let dc_new = DMatrix::from_fn(c.len(), n, |i, v| c[i].gradient(n)[v]);
        let keep = independent_rows(&dc_prev, &dc_new, cfg.tol_rank)?;

        if keep.is_empty() {
            // Same manifold again: the new rows must vanish identically nearby.
            for s in &samples {
                let (a_s, b_s) = chart.evaluate(s, 0, true)?.next.expect("requested");
                let c_s = pivots.annihilator(&a_s).map_err(|e| with_point(e, s))?.matvec(&b_s);
                let worst = values(&c_s).iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if worst > cut {
                    return Err(Error::Assumption(format!(
                        "step {k}: constraints vanish at the base point with dependent differentials but reach {worst:.3e} at {s:?}"
                    )));
                }
            }
            steps.push(record);
            return Ok(Chain { steps, charts, last: chart, warnings, end: ChainEnd::Stable { rank: r_k } });
        }

        let n_k = n_prev - keep.len();
        record.n_k = n_k;
        record.new_constraints = keep.len();
        let next = chart.extend(Level { pivots, keep });
        let on_next = next.sample(&xp, cfg.samples, cfg.radius, &mut rng, cfg)?;
        for s in &on_next {
            let (_, dc) = next.constraints(s)?;
            let found = numerical_rank(&dc, cfg.tol_rank)?.rank;
            if found != n - n_k {
                return Err(Error::RankNotConstant {
                    what: format!("differential of the constraints of {sym}_{k}"),
                    base: n - n_k,
                    found,
                    witness: s.clone(),
                });
            }
            let full = next.full_residual(s)?;
            if full > 1e-6 * spec.scale {
                return Err(Error::Assumption(format!(
                    "step {k}: dependent constraint rows do not vanish on {sym}_{k} (residual {full:.3e} at {s:?})"
                )));
            }
        }
        steps.push(record);
        charts.push(next.clone());
        chart = next;
        n_prev = n_k;
    }
    Err(Error::NotConverged(format!("internal error: {sym}_k did not stabilize within {} steps", cfg.max_steps_for(n))))
}

/// Runs the reduction at `xp`.
pub fn run_reduction(model: &DaeModel, xp: &[f64], cfg: &AnalysisConfig) -> Result<Reduction> {
    cfg.validate()?;
    let n = model.n();
    if xp.len() != n {
        return Err(Error::Dimension(format!("base point has {} entries, model has {n} states", xp.len())));
    }
    let whole = Chart::new(Arc::new(DaeRule::new(model)), xp.to_vec());
    let spec = ChainSpec { symbol: "M", subtract_codim: true, scale: model.f_at(xp)?.norm().max(1.0) };
    let chain = grow_chain(whole.clone(), cfg, &spec)?;
    let k_star = chain.steps.len() - 1;
    let (trace, reduced) = match chain.end {
        ChainEnd::Violated => (
            ReductionTrace {
                steps: chain.steps,
                k_star,
                n_star: None,
                r_star: None,
                consistent: false,
                internally_regular: false,
                warnings: chain.warnings,
            },
            None,
        ),
        ChainEnd::Stable { rank } => {
            let n_star = chain.last.dim();
            let reduced = ReducedSystem::new(chain.last.clone(), n_star, rank, cfg)?;
            (
                ReductionTrace {
                    steps: chain.steps,
                    k_star,
                    n_star: Some(n_star),
                    r_star: Some(rank),
                    consistent: true,
                    internally_regular: n_star == rank,
                    warnings: chain.warnings,
                },
                Some(reduced),
            )
        }
    };
    Ok(Reduction { trace, charts: chain.charts, reduced, whole })
}

/// Gauss-Newton projection onto a chart.
pub fn project_onto<R: ChartRule>(chart: &Chart<R>, x0: &[f64], cfg: &AnalysisConfig) -> Result<Vec<f64>> {
    chart.project(x0, cfg)
}

/// Solution set of `[E; DC] v = [F; 0]` at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmissibleVelocity {
    /// Minimum-norm particular solution.
    pub particular: DVector<f64>,
    /// Orthonormal basis of the free directions (`n* - r*` columns).
    pub free: DMatrix<f64>,
    pub residual: f64,
}

impl AdmissibleVelocity {
    pub fn is_unique(&self) -> bool {
        self.free.ncols() == 0
    }
}

/// The restriction of the DAE to `M*`.
pub struct ReducedSystem {
    chart: Chart<DaeRule>,
    pivots: FrozenPivots,
    pub n_star: usize,
    pub r_star: usize,
    pub internally_regular: bool,
    cfg: AnalysisConfig,
}

impl ReducedSystem {
    fn new(chart: Chart<DaeRule>, n_star: usize, r_star: usize, cfg: &AnalysisConfig) -> Result<ReducedSystem> {
        let xp = chart.base_point().to_vec();
        let a = Self::stacked_at(&chart, &xp)?.0;
        let rank = numerical_rank(&a, cfg.tol_rank)?.rank;
        let pivots = FrozenPivots::select(&a, rank, cfg.condition_bound).map_err(|e| with_point(e, &xp))?;
        Ok(ReducedSystem { chart, pivots, n_star, r_star, internally_regular: n_star == r_star, cfg: cfg.clone() })
    }

    pub fn chart(&self) -> &Chart<DaeRule> {
        &self.chart
    }

    pub fn config(&self) -> &AnalysisConfig {
        &self.cfg
    }

    pub fn n(&self) -> usize {
        self.chart.n()
    }

    /// `([E; DC], [F; 0])` at `x`.
    fn stacked_at(chart: &Chart<DaeRule>, x: &[f64]) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let rule = chart.rule();
        let e = rule.e.value(x)?;
        let f = DVector::from_vec(crate::expr::eval(rule.f.as_ref(), x)?);
        let (_, dc) = chart.constraints(x)?;
        let a = crate::numlin::stack_rows(&e, &dc);
        let mut b = DVector::zeros(a.nrows());
        b.rows_mut(0, f.len()).copy_from(&f);
        Ok((a, b))
    }

    pub fn project(&self, x0: &[f64]) -> Result<Vec<f64>> {
        self.chart.project(x0, &self.cfg)
    }

    /// Largest constraint residual of `M*` at `x`.
    pub fn constraint_residual(&self, x: &[f64]) -> Result<f64> {
        let (c, _) = self.chart.constraints(x)?;
        Ok(c.amax())
    }

    /// `||E(x) v - F(x)||`.
    pub fn dynamic_residual(&self, x: &[f64], v: &DVector<f64>) -> Result<f64> {
        let rule = self.chart.rule();
        let e = rule.e.value(x)?;
        let f = DVector::from_vec(crate::expr::eval(rule.f.as_ref(), x)?);
        Ok((e * v - f).norm())
    }

    /// Least-squares solution of `[E; DC] v = [F; 0]` at a point of `M*`.
    pub fn admissible_velocity(&self, x: &[f64]) -> Result<AdmissibleVelocity> {
        let (a, b) = Self::stacked_at(&self.chart, x)?;
        let (v, residual, rank) = lstsq(&a, &b, self.cfg.tol_rank);
        if residual > self.cfg.tol_residual * b.norm().max(1.0) {
            return Err(Error::Inconsistent(format!(
                "no admissible velocity at {x:?} (residual {residual:.3e}); the point is off M* or a rank dropped"
            )));
        }
        let free = if rank == self.n() { DMatrix::zeros(self.n(), 0) } else { nullspace(&a).basis().clone() };
        Ok(AdmissibleVelocity { particular: v, free, residual })
    }

    /// Velocity with the free coordinates' rates set to `w`, from the pivots
    /// of `[E; DC]` frozen at the base point.
    pub fn velocity_with(&self, x: &[f64], w: &[f64]) -> Result<DVector<f64>> {
        let free = self.pivots.free_cols();
        if w.len() != free.len() {
            return Err(Error::Dimension(format!("{} free directions, policy gave {}", free.len(), w.len())));
        }
        let (a, b) = Self::stacked_at(&self.chart, x)?;
        let am = crate::numlin::from_dmatrix(&a);
        let bm = Mat::column(b.iter().copied().collect());
        let kernel = self.pivots.kernel(&am).map_err(|e| with_point(e, x))?;
        let rinv = self.pivots.right_inverse(&am).map_err(|e| with_point(e, x))?;
        let rhs = Mat::column(self.pivots.rows.iter().map(|&r| bm[(r, 0)]).collect());
        let part = rinv.matmul(&rhs);
        let mut v = DVector::from_fn(self.n(), |i, _| part[(i, 0)]);
        for (c, &wc) in w.iter().enumerate() {
            for i in 0..self.n() {
                v[i] += kernel[(i, c)] * wc;
            }
        }
        // Kernel columns carry a unit in each free coordinate, so v[free] = w.
        let res = (&a * &v - &b).norm();
        if res > self.cfg.tol_residual * b.norm().max(1.0) {
            return Err(Error::Inconsistent(format!("no admissible velocity at {x:?} (residual {res:.3e})")));
        }
        Ok(v)
    }

    pub fn free_dim(&self) -> usize {
        self.pivots.free_cols().len()
    }

    /// The induced vector field `f*` on `M*`, when internally regular.
    pub fn f_star(&self) -> Result<VectorField> {
        if !self.internally_regular {
            return Err(Error::Assumption(format!(
                "f* needs internal regularity, but n* = {} and r* = {}",
                self.n_star, self.r_star
            )));
        }
        Ok(Arc::new(FStar { chart: self.chart.clone(), pivots: self.pivots.clone() }))
    }
}

/// `v(x)` solving the pivot rows of `[E; DC] v = [F; 0]`, on jets.
struct FStar {
    chart: Chart<DaeRule>,
    pivots: FrozenPivots,
}

impl SmoothMap for FStar {
    fn dim_in(&self) -> usize {
        self.chart.n()
    }

    fn dim_out(&self) -> usize {
        self.chart.n()
    }

    fn expand(&self, x: &[f64], order: usize) -> Result<Vec<Jet>> {
        let rule = self.chart.rule();
        let n = self.chart.n();
        let (e, f) = rule.expand_base(x, order)?;
        let dc = if self.chart.levels().is_empty() {
            Mat::zeros(0, n)
        } else {
            self.chart.evaluate(x, order + 1, false)?.dc
        };
        let (a, b) = rule.system(&(e, f), 0, order, &dc)?;
        let rinv = self.pivots.right_inverse(&a).map_err(|e| with_point(e, x))?;
        let rhs: Vec<Jet> = self.pivots.rows.iter().map(|&r| b[r].clone()).collect();
        Ok(rinv.matvec(&rhs))
    }
}
