//! Zero dynamics, relative degree, the `S_i` distributions and the
//! Weierstrass-form verdicts of an explicitation.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explicit::{ball_samples, bracket_residual, explicitate, ControlSystem, Fields};
use crate::expr::{jet_bracket, jet_jacobian, jet_lie_derivative, values, Jet};
use crate::model::{AnalysisConfig, DaeModel};
use crate::numlin::{condition_number, independent_rows, nullspace, numerical_rank, subspace_intersect, FrozenPivots, Mat, Subspace};
use crate::reduction::{grow_chain, run_reduction, Chain, ChainEnd, ChainSpec, Chart, ChartRule, StepRecord};

/// `N_1 = {h = 0}`; level `k >= 2` annihilates `DC g` and applies it to `DC f`.
pub struct ZeroDynamicsRule {
    cs: ControlSystem,
}

impl ChartRule for ZeroDynamicsRule {
    type Base = Fields;

    fn n(&self) -> usize {
        self.cs.n
    }

    fn expand_base(&self, x: &[f64], order: usize) -> Result<Fields> {
        self.cs.expand(x, order)
    }

    fn system(&self, base: &Fields, level: usize, order: usize, dc: &Mat<Jet>) -> Result<(Mat<Jet>, Vec<Jet>)> {
        let t = |j: &Jet| j.truncate(order);
        if level == 1 {
            return Ok((Mat::zeros(self.cs.p, 0), base.h.iter().map(t).collect()));
        }
        let dc = dc.map(t);
        let g = base.g.map(t);
        let f: Vec<Jet> = base.f.iter().map(t).collect();
        Ok((dc.matmul(&g), dc.matvec(&f)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroDynamicsTrace {
    /// `r_k` holds `rank DC_{k-1} g`; `n_k` is `dim N_k`.
    pub steps: Vec<StepRecord>,
    /// `dim N_1, ..., dim N_{k*}`
    pub dims: Vec<usize>,
    pub n_star: usize,
    /// `dim G(x_p) ∩ T N*`
    pub intersection_dim: usize,
    pub transversal: bool,
    pub warnings: Vec<String>,
}

pub struct ZeroDynamics {
    pub trace: ZeroDynamicsTrace,
    /// Charts of `N_1, ..., N_{k*}`.
    pub charts: Vec<Chart<ZeroDynamicsRule>>,
    pub last: Chart<ZeroDynamicsRule>,
}

pub fn run_zero_dynamics(cs: &ControlSystem, xp: &[f64], cfg: &AnalysisConfig) -> Result<ZeroDynamics> {
    cfg.validate()?;
    let h0 = cs.h_at(xp)?;
    let scale = cs.f_at(xp)?.norm().max(h0.norm()).max(1.0);
    if h0.amax() > cfg.tol_residual * scale {
        return Err(Error::Assumption(format!("zero dynamics need h(x_p) = 0, got max |h| = {:.3e}", h0.amax())));
    }
    let chart = Chart::new(Arc::new(ZeroDynamicsRule { cs: cs.clone() }), xp.to_vec());
    let spec = ChainSpec { symbol: "N", subtract_codim: false, scale };
    let Chain { steps, charts, last, warnings, end } = grow_chain(chart, cfg, &spec)?;
    if let ChainEnd::Violated = end {
        return Err(Error::Assumption(format!("base point is not on N_{}: {}", steps.len(), warnings.join("; "))));
    }
    let n = cs.n;
    let dims: Vec<usize> = charts.iter().map(|c| c.dim()).collect();
    let tangent = if last.levels().is_empty() { Subspace::full(n) } else { nullspace(&last.constraints(xp)?.1) };
    let g = Subspace::span(&cs.g_at(xp)?);
    let inter = subspace_intersect(&g, &tangent)?.dim();
    Ok(ZeroDynamics {
        trace: ZeroDynamicsTrace {
            steps,
            dims,
            n_star: last.dim(),
            intersection_dim: inter,
            transversal: inter == 0,
            warnings,
        },
        charts,
        last,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crosscheck {
    pub m_dims: Vec<usize>,
    pub n_dims: Vec<usize>,
    pub samples_per_chart: usize,
    pub max_residual: f64,
    pub witness: Option<Vec<f64>>,
    pub passed: bool,
}

/// Samples each `M_k` and `N_k` and evaluates the other chart's constraints there.
pub fn crosscheck_nk_equals_mk(model: &DaeModel, cs: &ControlSystem, xp: &[f64], cfg: &AnalysisConfig) -> Result<Crosscheck> {
    let red = run_reduction(model, xp, cfg)?;
    let zd = run_zero_dynamics(cs, xp, cfg)?;
    let m_dims: Vec<usize> = red.charts.iter().map(|c| c.dim()).collect();
    let n_dims = zd.trace.dims.clone();
    let count = 20;
    let mut rng = cfg.rng();
    let mut worst = 0.0f64;
    let mut witness = None;
    let mut note = |r: f64, x: &[f64]| {
        if r > worst {
            worst = r;
            witness = Some(x.to_vec());
        }
    };
    for (mk, nk) in red.charts.iter().zip(&zd.charts) {
        for s in mk.sample(xp, count, cfg.radius, &mut rng, cfg)? {
            note(nk.constraints(&s)?.0.amax(), &s);
        }
        for s in nk.sample(xp, count, cfg.radius, &mut rng, cfg)? {
            note(mk.constraints(&s)?.0.amax(), &s);
        }
    }
    let passed = m_dims == n_dims && worst <= 1e-6;
    Ok(Crosscheck { m_dims, n_dims, samples_per_chart: count, max_residual: worst, witness: if passed { None } else { witness }, passed })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelativeDegree {
    /// `None` where no `k <= n` gives a non-zero `L_g L_f^{k-1} h_i`.
    pub rho: Vec<Option<usize>>,
    pub decoupling: Vec<Vec<f64>>,
    pub rank: usize,
    pub condition: f64,
    /// `L_g L_f^k h_i` vanishes for `k < rho_i - 1` at every sample.
    pub vanishing_holds: bool,
    pub well_defined: bool,
}

/// `L_{g_j} L_f^{k} h_i` at the expansion point for `k = 0..=kmax`.
fn lie_table(fl: &Fields, i: usize, kmax: usize) -> Vec<Vec<f64>> {
    let m = fl.g.cols();
    let mut l = fl.h[i].clone();
    let mut rows = Vec::with_capacity(kmax + 1);
    for k in 0..=kmax {
        rows.push((0..m).map(|j| jet_lie_derivative(&l, &fl.g.col(j)).value()).collect());
        if k < kmax {
            l = jet_lie_derivative(&l, &fl.f);
        }
    }
    rows
}

pub fn relative_degree(cs: &ControlSystem, xp: &[f64], cfg: &AnalysisConfig) -> Result<RelativeDegree> {
    if cs.m != cs.p {
        return Err(Error::Dimension(format!("relative degree needs a square system, got m = {}, p = {}", cs.m, cs.p)));
    }
    let (n, m) = (cs.n, cs.m);
    let tol = cfg.tol_residual;
    let mut rho = vec![None; m];
    let mut rows = vec![Vec::new(); m];
    for order in 1..=n.max(1) {
        let fl = cs.expand(xp, order)?;
        for i in 0..m {
            if rho[i].is_some() {
                continue;
            }
            let table = lie_table(&fl, i, order - 1);
            if let Some(k) = table.iter().position(|r| r.iter().any(|v| v.abs() > tol)) {
                rho[i] = Some(k + 1);
                rows[i] = table[k].clone();
            }
        }
        if rho.iter().all(Option::is_some) {
            break;
        }
    }
    let mut vanishing = true;
    let top = rho.iter().flatten().copied().max().unwrap_or(0);
    if top > 1 {
        let mut rng = cfg.rng();
        for s in ball_samples(xp, cfg.samples, cfg.radius, &mut rng) {
            let fl = cs.expand(&s, top - 1)?;
            for (i, r) in rho.iter().enumerate() {
                if let Some(r) = *r {
                    if r < 2 {
                        continue;
                    }
                    let table = lie_table(&fl, i, r - 2);
                    vanishing &= table.iter().flatten().all(|v| v.abs() <= tol);
                }
            }
        }
    }
    let found = rho.iter().all(Option::is_some);
    let d = DMatrix::from_fn(m, m, |i, j| if found { rows[i][j] } else { rows[i].get(j).copied().unwrap_or(0.0) });
    let rank = numerical_rank(&d, cfg.tol_rank)?.rank;
    Ok(RelativeDegree {
        rho,
        decoupling: (0..m).map(|i| d.row(i).iter().copied().collect()).collect(),
        rank,
        condition: condition_number(&d),
        vanishing_holds: vanishing,
        well_defined: found && rank == m && vanishing,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SChain {
    /// `dim S_1, dim S_2, ...` until the dimension repeats.
    pub dims: Vec<usize>,
    pub involutive: Vec<bool>,
    pub residuals: Vec<f64>,
    pub samples: usize,
    pub radius: f64,
}

/// Selections frozen at the base point.
#[derive(Clone, Default)]
struct Frozen {
    keep: Vec<Vec<usize>>,
    meet: Vec<FrozenPivots>,
}

struct SLevels {
    dims: Vec<usize>,
    residuals: Vec<f64>,
    stable: bool,
}

/// Runs `levels` levels of the `S_i` recursion at `x`, choosing selections
/// when `frozen` is empty and reusing them otherwise.
fn s_levels(cs: &ControlSystem, x: &[f64], levels: usize, frozen: &mut Frozen, cfg: &AnalysisConfig) -> Result<SLevels> {
    let n = cs.n;
    let choose = frozen.keep.is_empty();
    let fl = cs.expand(x, levels)?;
    let dh = jet_jacobian(&fl.h, n);
    let mut cand: Vec<Vec<Jet>> = (0..cs.m).map(|j| fl.g.col(j)).collect();
    let mut out = SLevels { dims: Vec::new(), residuals: Vec::new(), stable: false };
    for i in 0..levels {
        let order = levels - i;
        let vals = DMatrix::from_fn(n, cand.len(), |r, c| cand[c][r].value());
        let dim = numerical_rank(&vals, cfg.tol_rank)?.rank;
        if choose {
            frozen.keep.push(independent_rows(&DMatrix::zeros(0, n), &vals.transpose(), cfg.tol_rank)?);
        }
        let basis: Vec<Vec<Jet>> = frozen.keep[i].iter().map(|&c| cand[c].clone()).collect();
        out.residuals.push(bracket_residual(&basis, x, cfg)?);
        let repeated = out.dims.last() == Some(&dim);
        out.dims.push(dim);
        if repeated {
            out.stable = true;
            break;
        }
        if i + 1 == levels {
            break;
        }
        let t = |j: &Jet| j.truncate(order);
        let b = Mat::from_fn(n, basis.len(), |r, c| t(&basis[c][r]));
        let mh = dh.map(t).matmul(&b);
        if choose {
            frozen.meet.push(FrozenPivots::at(&mh.re(), cfg.tol_rank, cfg.condition_bound)?);
        }
        let k = frozen.meet[i].kernel(&mh)?;
        let meet = b.matmul(&k);
        let mut next: Vec<Vec<Jet>> = basis.iter().map(|v| v.iter().map(|j| j.truncate(order - 1)).collect()).collect();
        let f: Vec<Jet> = fl.f.iter().map(t).collect();
        let gs: Vec<Vec<Jet>> = (0..cs.m).map(|j| fl.g.col(j).iter().map(t).collect()).collect();
        for c in 0..meet.cols() {
            let v = meet.col(c);
            next.push(jet_bracket(&f, &v));
            for g in &gs {
                next.push(jet_bracket(g, &v));
            }
        }
        cand = next;
    }
    Ok(out)
}

pub fn s_chain(cs: &ControlSystem, xp: &[f64], cfg: &AnalysisConfig) -> Result<SChain> {
    let cap = cs.n + 1;
    let mut levels = cap.min(3);
    let (mut frozen, at_base) = loop {
        let mut fz = Frozen::default();
        let run = s_levels(cs, xp, levels, &mut fz, cfg)?;
        if run.stable || levels == cap {
            break (fz, run);
        }
        levels = (levels + 2).min(cap);
    };
    let used = at_base.dims.len();
    let mut residuals = at_base.residuals.clone();
    let mut rng = cfg.rng();
    let samples = ball_samples(xp, cfg.samples, cfg.radius, &mut rng);
    for s in &samples {
        let run = s_levels(cs, s, used, &mut frozen, cfg)?;
        if let Some(i) = (0..used).find(|&i| run.dims.get(i) != at_base.dims.get(i)) {
            return Err(Error::RankNotConstant {
                what: format!("S_{}", i + 1),
                base: at_base.dims[i],
                found: run.dims.get(i).copied().unwrap_or(0),
                witness: s.clone(),
            });
        }
        for (r, v) in residuals.iter_mut().zip(run.residuals) {
            *r = r.max(v);
        }
    }
    Ok(SChain {
        dims: at_base.dims,
        involutive: residuals.iter().map(|&r| r <= cfg.tol_residual).collect(),
        residuals,
        samples: samples.len(),
        radius: cfg.radius,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nwf2 {
    pub relative_degree: RelativeDegree,
    /// `None` when the chain has no constant dimensions around the base point.
    pub s_chain: Option<SChain>,
    pub s_chain_failure: Option<String>,
    /// Involutivity of `S_i` for `1 <= i <= n - 1`.
    pub involutive_levels: Vec<bool>,
    pub verdict: bool,
    pub caveat: Option<String>,
}

fn require_square_dae(model: &DaeModel) -> Result<()> {
    if model.l() != model.n() {
        return Err(Error::Dimension(format!("needs l = n, model has l = {} and n = {}", model.l(), model.n())));
    }
    Ok(())
}

pub fn nwf2_verdict(model: &DaeModel, xp: &[f64], cfg: &AnalysisConfig) -> Result<Nwf2> {
    require_square_dae(model)?;
    let cs = explicitate(model, xp, cfg)?;
    let rd = relative_degree(&cs, xp, cfg)?;
    let (sc, failure) = match s_chain(&cs, xp, cfg) {
        Ok(sc) => (Some(sc), None),
        Err(e @ Error::RankNotConstant { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    let n = model.n();
    let involutive_levels: Vec<bool> = match &sc {
        Some(sc) => {
            let last = *sc.involutive.last().unwrap_or(&true);
            (0..n.saturating_sub(1)).map(|i| sc.involutive.get(i).copied().unwrap_or(last)).collect()
        }
        None => Vec::new(),
    };
    let verdict = rd.well_defined && sc.is_some() && involutive_levels.iter().all(|&b| b);
    Ok(Nwf2 {
        relative_degree: rd,
        s_chain: sc,
        s_chain_failure: failure,
        involutive_levels,
        verdict,
        caveat: (!verdict).then(|| {
            "negative for this explicitation representative only: the conditions are not invariant under output multiplication and output injection".to_string()
        }),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nwf1 {
    pub indices: Vec<usize>,
    /// `dim N_{k-1} - dim N_k`, with `N_0` the whole space.
    pub drops: Vec<usize>,
    pub m: usize,
    pub n_star: usize,
}

/// Indices from the dimension drops of the zero-dynamics chain.
pub fn nwf1_indices(model: &DaeModel, xp: &[f64], cfg: &AnalysisConfig) -> Result<Nwf1> {
    require_square_dae(model)?;
    let n = model.n();
    let red = run_reduction(model, xp, cfg)?;
    if !red.trace.internally_regular {
        return Err(Error::Assumption(format!(
            "(A3) fails: n* = {:?}, r* = {:?}",
            red.trace.n_star, red.trace.r_star
        )));
    }
    let cs = explicitate(model, xp, cfg)
        .map_err(|e| Error::Assumption(format!("(A1) fails: rank E is not constant around the base point: {e}")))?;
    let zd = run_zero_dynamics(&cs, xp, cfg).map_err(|e| Error::Assumption(format!("(A2) fails: {e}")))?;
    let mut prev = n;
    let mut drops = Vec::new();
    for &d in &zd.trace.dims {
        drops.push(prev - d);
        prev = d;
    }
    if let Some(&d1) = drops.first() {
        if d1 != cs.m {
            return Err(Error::Assumption(format!("(A2) fails: first drop {d1} differs from m = {}", cs.m)));
        }
    }
    if drops.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::Assumption(format!("(A2) fails: drops {drops:?} increase")));
    }
    let mut indices = Vec::new();
    for k in 1..=drops.len() {
        let ge_k = drops[k - 1];
        let ge_k1 = drops.get(k).copied().unwrap_or(0);
        indices.extend(std::iter::repeat(k).take(ge_k - ge_k1));
    }
    let n_star = zd.trace.n_star;
    if indices.iter().sum::<usize>() != n - n_star {
        return Err(Error::Assumption(format!("indices {indices:?} do not add up to n - n* = {}", n - n_star)));
    }
    Ok(Nwf1 { indices, drops, m: cs.m, n_star })
}

/// Values of `h` along with `dh`, for projecting onto the output-zeroing set.
pub fn output_values(cs: &ControlSystem, x: &[f64]) -> Result<Vec<f64>> {
    Ok(values(&cs.expand(x, 0)?.h))
}
