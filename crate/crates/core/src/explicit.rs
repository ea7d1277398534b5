//! Explicitation of a DAE as a control system `x' = f + g v, y = h`,
//! feedback transformations, solution correspondence and involutivity.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{jet_bracket, values, ConstMap, Expr, ExprMap, Jet, SmoothMap, VectorField};
use crate::model::{AnalysisConfig, DaeModel};
use crate::numlin::{lstsq, numerical_rank, spectral_norm, with_point, FrozenPivots, Mat, MatrixMap, Subspace};
use crate::reduction::{gauss_newton, ReducedSystem};
use crate::sim::{grid, integrate, rk4_step};

/// Taylor data of `(f, g, h)` at one point.
pub struct Fields {
    pub f: Vec<Jet>,
    /// `n x m`
    pub g: Mat<Jet>,
    pub h: Vec<Jet>,
}

/// Source of the `(f, g, h)` expansions of a control system.
pub trait ControlFields: Send + Sync {
    fn expand(&self, x: &[f64], order: usize) -> Result<Fields>;
}

/// How an explicitation was built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub base_point: Vec<f64>,
    pub q: usize,
    /// Rows of `E` kept in `E_1`; the others are compressed into `h`.
    pub pivot_rows: Vec<usize>,
    /// Columns solved for in `f`; the others index the driving variables.
    pub pivot_cols: Vec<usize>,
    pub transformed: bool,
}

#[derive(Clone)]
pub struct ControlSystem {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    fields: Arc<dyn ControlFields>,
    pub provenance: Option<Provenance>,
}

impl std::fmt::Debug for ControlSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ControlSystem(n={}, m={}, p={})", self.n, self.m, self.p)
    }
}

impl ControlSystem {
    pub fn new(n: usize, m: usize, p: usize, fields: Arc<dyn ControlFields>) -> ControlSystem {
        ControlSystem { n, m, p, fields, provenance: None }
    }

    /// From expressions: `f` (n), the columns of `g` (m lists of n), `h` (p).
    pub fn from_exprs(n: usize, f: Vec<Expr>, g_cols: Vec<Vec<Expr>>, h: Vec<Expr>) -> Result<ControlSystem> {
        if f.len() != n || g_cols.iter().any(|c| c.len() != n) {
            return Err(Error::Dimension("drift and input fields need n components".into()));
        }
        let m = g_cols.len();
        let p = h.len();
        let f = ExprMap::new(n, f)?;
        let mut g = Vec::with_capacity(n * m);
        for i in 0..n {
            for col in &g_cols {
                g.push(col[i].clone());
            }
        }
        let g = ExprMap::new(n, g)?;
        let h = ExprMap::new(n, h)?;
        Ok(ControlSystem::new(n, m, p, Arc::new(ExprFields { n, m, f, g, h })))
    }

    pub fn expand(&self, x: &[f64], order: usize) -> Result<Fields> {
        if x.len() != self.n {
            return Err(Error::Dimension(format!("point has {} entries, system has {} states", x.len(), self.n)));
        }
        self.fields.expand(x, order)
    }

    pub fn f_at(&self, x: &[f64]) -> Result<DVector<f64>> {
        Ok(DVector::from_vec(values(&self.expand(x, 0)?.f)))
    }

    pub fn g_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.expand(x, 0)?.g.re())
    }

    pub fn h_at(&self, x: &[f64]) -> Result<DVector<f64>> {
        Ok(DVector::from_vec(values(&self.expand(x, 0)?.h)))
    }

    /// `dh(x)` (p x n).
    pub fn dh_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let h = self.expand(x, 1)?.h;
        Ok(DMatrix::from_fn(h.len(), self.n, |i, v| h[i].gradient(self.n)[v]))
    }

    pub fn drift(&self) -> VectorField {
        Arc::new(Part { cs: self.clone(), which: Which::F })
    }

    pub fn input(&self, j: usize) -> VectorField {
        Arc::new(Part { cs: self.clone(), which: Which::G(j) })
    }

    pub fn inputs(&self) -> Vec<VectorField> {
        (0..self.m).map(|j| self.input(j)).collect()
    }

    pub fn output(&self) -> VectorField {
        Arc::new(Part { cs: self.clone(), which: Which::H })
    }
}

struct ExprFields {
    n: usize,
    m: usize,
    f: ExprMap,
    g: ExprMap,
    h: ExprMap,
}

impl ControlFields for ExprFields {
    fn expand(&self, x: &[f64], order: usize) -> Result<Fields> {
        Ok(Fields {
            f: self.f.expand(x, order)?,
            g: Mat::from_vec(self.n, self.m, self.g.expand(x, order)?),
            h: self.h.expand(x, order)?,
        })
    }
}

#[derive(Clone, Copy)]
enum Which {
    F,
    G(usize),
    H,
}

struct Part {
    cs: ControlSystem,
    which: Which,
}

impl SmoothMap for Part {
    fn dim_in(&self) -> usize {
        self.cs.n
    }

    fn dim_out(&self) -> usize {
        match self.which {
            Which::F | Which::G(_) => self.cs.n,
            Which::H => self.cs.p,
        }
    }

    fn expand(&self, x: &[f64], order: usize) -> Result<Vec<Jet>> {
        let fl = self.cs.expand(x, order)?;
        Ok(match self.which {
            Which::F => fl.f,
            Which::G(j) => fl.g.col(j),
            Which::H => fl.h,
        })
    }
}

/// `f = E_1^† F_1`, `g = ker E`, `h = L F` from pivots frozen at the base point.
struct DaeFields {
    e: MatrixMap,
    f: VectorField,
    pivots: FrozenPivots,
}

impl ControlFields for DaeFields {
    fn expand(&self, x: &[f64], order: usize) -> Result<Fields> {
        let e = self.e.expand(x, order)?;
        let big_f = self.f.expand(x, order)?;
        let rinv = self.pivots.right_inverse(&e).map_err(|err| with_point(err, x))?;
        let f1: Vec<Jet> = self.pivots.rows.iter().map(|&r| big_f[r].clone()).collect();
        let f = if f1.is_empty() { vec![Jet::constant(0.0); e.cols()] } else { rinv.matvec(&f1) };
        let g = self.pivots.kernel(&e).map_err(|err| with_point(err, x))?;
        let h = self.pivots.annihilator(&e).map_err(|err| with_point(err, x))?.matvec(&big_f);
        Ok(Fields { f, g, h })
    }
}

/// Random points at distance `radius` from `x`.
pub fn ball_samples<G: Rng>(x: &[f64], count: usize, radius: f64, rng: &mut G) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            let mut u: Vec<f64> = (0..x.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            u.iter_mut().for_each(|v| *v /= norm);
            x.iter().zip(&u).map(|(a, b)| a + radius * b).collect()
        })
        .collect()
}

/// Rank of `E` at the base point after checking it on samples around it.
pub fn sampled_rank_e(model: &DaeModel, xp: &[f64], cfg: &AnalysisConfig) -> Result<usize> {
    let q = numerical_rank(&model.e_at(xp)?, cfg.tol_rank)?.rank;
    let mut rng = cfg.rng();
    for s in ball_samples(xp, cfg.samples, cfg.radius, &mut rng) {
        let found = numerical_rank(&model.e_at(&s)?, cfg.tol_rank)?.rank;
        if found != q {
            return Err(Error::RankNotConstant { what: "E".into(), base: q, found, witness: s });
        }
    }
    Ok(q)
}

pub fn explicitate(model: &DaeModel, xp: &[f64], cfg: &AnalysisConfig) -> Result<ControlSystem> {
    cfg.validate()?;
    let q = sampled_rank_e(model, xp, cfg)?;
    let e0 = model.e_at(xp)?;
    let pivots = FrozenPivots::select(&e0, q, cfg.condition_bound).map_err(|err| with_point(err, xp))?;
    let (n, l) = (model.n(), model.l());
    let provenance = Provenance {
        base_point: xp.to_vec(),
        q,
        pivot_rows: pivots.rows.clone(),
        pivot_cols: pivots.cols.clone(),
        transformed: false,
    };
    let fields = DaeFields { e: model.e_map(), f: model.f_map(), pivots };
    let mut cs = ControlSystem::new(n, n - q, l - q, Arc::new(fields));
    cs.provenance = Some(provenance);
    Ok(cs)
}

/// `f -> f + γ h + g α`, `g -> g β`, `h -> η h`.
#[derive(Clone)]
pub struct FeedbackTransform {
    /// `R^n -> R^m`
    pub alpha: VectorField,
    /// `m x m`
    pub beta: MatrixMap,
    /// `n x p`
    pub gamma: MatrixMap,
    /// `p x p`
    pub eta: MatrixMap,
}

fn const_matrix(n: usize, m: &DMatrix<f64>) -> MatrixMap {
    let value = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| (i, j))).map(|(i, j)| m[(i, j)]).collect();
    MatrixMap::new(m.nrows(), m.ncols(), Arc::new(ConstMap { n, value })).expect("constant map shape")
}

impl FeedbackTransform {
    pub fn identity(n: usize, m: usize, p: usize) -> FeedbackTransform {
        FeedbackTransform::constant(n, &DVector::zeros(m), &DMatrix::identity(m, m), &DMatrix::zeros(n, p), &DMatrix::identity(p, p))
    }

    pub fn constant(n: usize, alpha: &DVector<f64>, beta: &DMatrix<f64>, gamma: &DMatrix<f64>, eta: &DMatrix<f64>) -> FeedbackTransform {
        FeedbackTransform {
            alpha: Arc::new(ConstMap { n, value: alpha.iter().copied().collect() }),
            beta: const_matrix(n, beta),
            gamma: const_matrix(n, gamma),
            eta: const_matrix(n, eta),
        }
    }
}

struct Transformed {
    base: ControlSystem,
    t: FeedbackTransform,
}

impl ControlFields for Transformed {
    fn expand(&self, x: &[f64], order: usize) -> Result<Fields> {
        let Fields { f, g, h } = self.base.expand(x, order)?;
        let alpha = self.t.alpha.expand(x, order)?;
        let beta = self.t.beta.expand(x, order)?;
        let gamma = self.t.gamma.expand(x, order)?;
        let eta = self.t.eta.expand(x, order)?;
        let gh = gamma.matvec(&h);
        let ga = g.matvec(&alpha);
        let f = f.into_iter().zip(gh).zip(ga).map(|((a, b), c)| a + b + c).collect();
        Ok(Fields { f, g: g.matmul(&beta), h: eta.matvec(&h) })
    }
}

pub fn apply_feedback(cs: &ControlSystem, t: &FeedbackTransform, at: &[f64]) -> Result<ControlSystem> {
    let (n, m, p) = (cs.n, cs.m, cs.p);
    let shapes = [
        (t.alpha.dim_in() == n && t.alpha.dim_out() == m, "alpha"),
        (t.beta.rows == m && t.beta.cols == m, "beta"),
        (t.gamma.rows == n && t.gamma.cols == p, "gamma"),
        (t.eta.rows == p && t.eta.cols == p, "eta"),
    ];
    if let Some((_, name)) = shapes.iter().find(|(ok, _)| !ok) {
        return Err(Error::Dimension(format!("feedback transform: {name} has the wrong shape for n={n}, m={m}, p={p}")));
    }
    for (name, map, k) in [("beta", &t.beta, m), ("eta", &t.eta, p)] {
        if numerical_rank(&map.value(at)?, None)?.rank < k {
            return Err(Error::Assumption(format!("{name} is not invertible at {at:?}")));
        }
    }
    let mut out = ControlSystem::new(n, m, p, Arc::new(Transformed { base: cs.clone(), t: t.clone() }));
    out.provenance = cs.provenance.clone().map(|mut pr| {
        pr.transformed = true;
        pr
    });
    Ok(out)
}

/// Residuals of the explicitation-class membership checks at sample points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub samples: usize,
    /// `max ||E g|| / (||E|| ||g||)`
    pub kernel: f64,
    /// All samples had `rank g = m`.
    pub full_rank_g: bool,
    /// `max ||E f - F|| / max(1, ||F||)` on the zero set of `h`.
    pub drift: f64,
    /// `max ||h_ref||` on the zero set of `h`.
    pub zero_set: f64,
    /// All samples had `rank [dh; dh_ref] = p`.
    pub same_output_span: bool,
    pub passed: bool,
}

/// Checks that `cs` belongs to the explicitation class of `model` at points
/// sampled around `xp`; `reference` is an explicitation of `model` itself.
pub fn check_membership(model: &DaeModel, cs: &ControlSystem, reference: &ControlSystem, xp: &[f64], cfg: &AnalysisConfig) -> Result<Membership> {
    let mut rng = cfg.rng();
    let mut out = Membership { samples: 0, kernel: 0.0, full_rank_g: true, drift: 0.0, zero_set: 0.0, same_output_span: true, passed: false };
    for s in ball_samples(xp, cfg.samples, cfg.radius, &mut rng) {
        let x = if cs.p == 0 {
            s
        } else {
            gauss_newton(&s, cfg, |y| Ok((cs.h_at(y)?, cs.dh_at(y)?)))?
        };
        let e = model.e_at(&x)?;
        let f_big = model.f_at(&x)?;
        let g = cs.g_at(&x)?;
        let scale = spectral_norm(&e).max(1.0) * spectral_norm(&g).max(1.0);
        out.kernel = out.kernel.max((&e * &g).norm() / scale);
        out.full_rank_g &= numerical_rank(&g, cfg.tol_rank)?.rank == cs.m;
        let f = cs.f_at(&x)?;
        out.drift = out.drift.max((&e * f - &f_big).norm() / f_big.norm().max(1.0));
        if cs.p > 0 {
            out.zero_set = out.zero_set.max(reference.h_at(&x)?.amax());
            let stacked = crate::numlin::stack_rows(&cs.dh_at(&x)?, &reference.dh_at(&x)?);
            out.same_output_span &= numerical_rank(&stacked, cfg.tol_rank)?.rank == cs.p;
        }
        out.samples += 1;
    }
    let tol = 1e-8f64.max(cfg.tol_residual);
    out.passed = out.kernel <= 1e-10f64.max(cfg.tol_residual * 1e-2)
        && out.full_rank_g
        && out.drift <= tol
        && out.zero_set <= tol
        && out.same_output_span;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    /// `sup_t ||x_dae(t) - x_cs(t)||`
    pub max_deviation: f64,
    /// `sup_t ||h(x_cs(t))||`
    pub max_output: f64,
    /// Largest least-squares residual of `g v = x' - f`.
    pub max_recovery_residual: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// Integrates the DAE on `M*` and, separately, the control system driven by
/// the least-squares recovered input `v(x) = g^+(x) (v_dae(x) - f(x))`.
pub fn check_solution_correspondence(
    reduced: &ReducedSystem,
    cs: &ControlSystem,
    x0: &[f64],
    tmax: f64,
    dt: f64,
) -> Result<Correspondence> {
    let dae = integrate(reduced, x0, tmax, dt)?;
    let (steps, h) = grid(tmax, dt)?;
    let tol_rank = reduced.config().tol_rank;
    let mut x = dae.states[0].clone();
    let mut worst_rec = 0.0f64;
    let mut vel = |y: &[f64]| -> Result<DVector<f64>> {
        let target = reduced.admissible_velocity(y)?.particular;
        let Fields { f, g, .. } = cs.expand(y, 0)?;
        let f = DVector::from_vec(values(&f));
        let g = g.re();
        let rhs = &target - &f;
        let (v, res, _) = lstsq(&g, &rhs, tol_rank);
        worst_rec = worst_rec.max(res);
        Ok(f + g * v)
    };
    let mut max_dev = 0.0f64;
    let mut max_out = cs.h_at(&x)?.amax();
    for i in 0..steps {
        x = rk4_step(&x, h, &mut vel)?;
        let d = x.iter().zip(&dae.states[i + 1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        max_dev = max_dev.max(d);
        max_out = max_out.max(cs.h_at(&x)?.amax());
    }
    let threshold = 1e-6;
    let tol = reduced.config().tol_residual;
    Ok(Correspondence {
        max_deviation: max_dev,
        max_output: max_out,
        max_recovery_residual: worst_rec,
        threshold,
        passed: max_dev <= threshold && max_out <= threshold.max(tol) && worst_rec <= threshold,
    })
}

/// Sampled involutivity evidence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Involutivity {
    pub involutive: bool,
    pub worst_residual: f64,
    pub samples: usize,
    pub radius: f64,
    pub fields: usize,
}

fn involutivity_at(fields: &[VectorField], x: &[f64], cfg: &AnalysisConfig) -> Result<f64> {
    let jets = fields.iter().map(|f| f.expand(x, 1)).collect::<Result<Vec<_>>>()?;
    bracket_residual(&jets, x, cfg)
}

/// Largest component of a pairwise bracket outside the span of the fields,
/// relative to `max(1, max ||X_i||^2)`; the fields must be independent at `x`.
pub(crate) fn bracket_residual(jets: &[Vec<Jet>], x: &[f64], cfg: &AnalysisConfig) -> Result<f64> {
    let n = x.len();
    if jets.is_empty() {
        return Ok(0.0);
    }
    let vals = DMatrix::from_fn(n, jets.len(), |i, j| jets[j][i].value());
    let rank = numerical_rank(&vals, cfg.tol_rank)?.rank;
    if rank < jets.len() {
        return Err(Error::RankNotConstant { what: "the vector fields".into(), base: jets.len(), found: rank, witness: x.to_vec() });
    }
    let span = Subspace::span(&vals);
    let scale = jets.iter().map(|j| values(j).iter().map(|v| v * v).sum::<f64>()).fold(1.0, f64::max);
    let mut worst = 0.0f64;
    for i in 0..jets.len() {
        for j in i + 1..jets.len() {
            let b = DMatrix::from_vec(n, 1, values(&jet_bracket(&jets[i], &jets[j])));
            worst = worst.max(span.residual(&b) / scale);
        }
    }
    Ok(worst)
}

/// Checks whether brackets of `fields` stay in their span around `xp`.
pub fn involutivity_verdict(fields: &[VectorField], xp: &[f64], cfg: &AnalysisConfig) -> Result<Involutivity> {
    let mut worst = involutivity_at(fields, xp, cfg)?;
    let mut rng = cfg.rng();
    let samples = ball_samples(xp, cfg.samples, cfg.radius, &mut rng);
    for s in &samples {
        worst = worst.max(involutivity_at(fields, s, cfg)?);
    }
    Ok(Involutivity {
        involutive: worst <= cfg.tol_residual,
        worst_residual: worst,
        samples: samples.len() + 1,
        radius: cfg.radius,
        fields: fields.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemiExplicit {
    pub rank_constant: bool,
    pub rank_e: Option<usize>,
    pub involutivity: Option<Involutivity>,
    pub semi_explicit: bool,
    pub note: String,
}

pub fn semi_explicit_verdict(model: &DaeModel, xp: &[f64], cfg: &AnalysisConfig) -> Result<SemiExplicit> {
    match explicitate(model, xp, cfg) {
        Err(Error::RankNotConstant { base, found, witness, .. }) => Ok(SemiExplicit {
            rank_constant: false,
            rank_e: None,
            involutivity: None,
            semi_explicit: false,
            note: format!("rank E is {base} at the base point but {found} at {witness:?}"),
        }),
        Err(e) => Err(e),
        Ok(cs) => {
            let inv = involutivity_verdict(&cs.inputs(), xp, cfg)?;
            let yes = inv.involutive;
            Ok(SemiExplicit {
                rank_constant: true,
                rank_e: Some(model.n() - cs.m),
                semi_explicit: yes,
                involutivity: Some(inv),
                note: if yes {
                    "ker E is involutive: locally ex-equivalent to a semi-explicit DAE and the driving variables can be fully reduced (rectifying coordinates not constructed)".into()
                } else {
                    "ker E is not involutive: not locally ex-equivalent to a semi-explicit DAE".into()
                },
            })
        }
    }
}

/// Summary of an explicitation at its base point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplicitationSummary {
    pub q: usize,
    pub m: usize,
    pub p: usize,
    /// `n - rank dh(x_p)`
    pub h_zero_set_dim: usize,
    pub involutive: bool,
    pub evidence: Involutivity,
    pub provenance: Option<Provenance>,
}

pub fn summarize(cs: &ControlSystem, xp: &[f64], cfg: &AnalysisConfig) -> Result<ExplicitationSummary> {
    let evidence = involutivity_verdict(&cs.inputs(), xp, cfg)?;
    let rank_dh = if cs.p == 0 { 0 } else { numerical_rank(&cs.dh_at(xp)?, cfg.tol_rank)?.rank };
    Ok(ExplicitationSummary {
        q: cs.n - cs.m,
        m: cs.m,
        p: cs.p,
        h_zero_set_dim: cs.n - rank_dh,
        involutive: evidence.involutive,
        evidence,
        provenance: cs.provenance.clone(),
    })
}
