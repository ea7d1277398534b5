use anyhow::{anyhow, bail, Context};
use daegeo::control::{crosscheck_nk_equals_mk, nwf1_indices, nwf2_verdict, run_zero_dynamics};
use daegeo::explicit::{explicitate, semi_explicit_verdict, summarize};
use daegeo::linear::{dims, is_regular, quasi_weierstrass, wong_v, wong_w, LinearPencil};
use daegeo::model::linearize_at;
use daegeo::reduction::run_reduction;
use daegeo::sim::{integrate, integrate_free, zero_policy};
use daegeo::{AnalysisConfig, DaeModel};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::report::Report;
use crate::{Command, Common, Outcome};

fn config(c: &Common) -> AnalysisConfig {
    let mut cfg = AnalysisConfig::default();
    cfg.tol_rank = c.tol_rank.or(cfg.tol_rank);
    cfg.tol_residual = c.tol_residual.unwrap_or(cfg.tol_residual);
    cfg.samples = c.samples.unwrap_or(cfg.samples);
    cfg.radius = c.radius.unwrap_or(cfg.radius);
    cfg.seed = c.seed.unwrap_or(cfg.seed);
    cfg.tmax = c.tmax.unwrap_or(cfg.tmax);
    cfg.dt = c.dt.unwrap_or(cfg.dt);
    cfg
}

fn parse_point(text: &str, n: usize) -> anyhow::Result<Vec<f64>> {
    let v = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad coordinate `{}` in --point", s.trim())))
        .collect::<anyhow::Result<Vec<f64>>>()?;
    if v.len() != n {
        bail!("--point has {} coordinates, model has {n} states", v.len());
    }
    Ok(v)
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[derive(Serialize)]
struct WongReport {
    source: &'static str,
    v_dims: Vec<usize>,
    w_dims: Vec<usize>,
    regular: Option<bool>,
}

#[derive(Serialize)]
struct WfReport {
    indices: Vec<usize>,
    n_slow: usize,
    n_fast: usize,
    a: Vec<Vec<f64>>,
    nilpotent: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    p: Vec<Vec<f64>>,
    residuals: daegeo::linear::Residuals,
}

#[derive(Serialize)]
struct SimSummary {
    steps: usize,
    t_end: f64,
    final_state: Vec<f64>,
    max_res_dyn: f64,
    max_res_con: f64,
    policy: &'static str,
}

pub fn execute(cmd: &Command) -> anyhow::Result<Outcome> {
    let (name, common) = match cmd {
        Command::Analyze(c) => ("analyze", c),
        Command::Explicitate(c) => ("explicitate", c),
        Command::Zerodyn(c) => ("zerodyn", c),
        Command::Nwf2(c) => ("nwf2", c),
        Command::Wong(c) => ("wong", c),
        Command::Wf(c) => ("wf", c),
        Command::Simulate(c) => ("simulate", c),
    };
    let model = DaeModel::load(&common.model).with_context(|| format!("cannot load {}", common.model.display()))?;
    let cfg = config(common);
    cfg.validate().map_err(|e| anyhow!("{e}"))?;
    let point = match &common.point {
        Some(p) => Some(parse_point(p, model.n())?),
        None => model.base_point.clone(),
    };
    let needs_point = !matches!(name, "wf") && !(name == "wong" && model.is_linear());
    if needs_point && point.is_none() {
        bail!("`{name}` needs a base point: pass --point or add a [point] section");
    }
    let mut report = Report::new(name, &model.name, cfg.clone(), point.clone());
    let mut csv = None;
    let xp = point.unwrap_or_default();
    let result = match name {
        "analyze" => analyze(&model, &xp, &cfg, &mut report),
        "explicitate" => explicit(&model, &xp, &cfg, &mut report),
        "zerodyn" => zerodyn(&model, &xp, &cfg, &mut report),
        "nwf2" => nwf2_verdict(&model, &xp, &cfg).map(|r| report.section("nwf2", &r)),
        "wong" => wong(&model, &xp, &cfg, &mut report),
        "wf" => wf(&model, &cfg, &mut report),
        _ => simulate(&model, &xp, &cfg, &mut report, &mut csv),
    };
    if let Err(e) = result {
        report.error = Some(e.to_string());
    }
    Ok(Outcome { report, common: common.clone(), csv })
}

type Res = daegeo::Result<()>;

fn analyze(model: &DaeModel, xp: &[f64], cfg: &AnalysisConfig, report: &mut Report) -> Res {
    let red = run_reduction(model, xp, cfg)?;
    report.warnings.extend(red.trace.warnings.iter().cloned());
    report.section("reduction", &red.trace);
    match semi_explicit_verdict(model, xp, cfg) {
        Ok(v) => report.section("semi_explicit", &v),
        Err(e) => report.warnings.push(format!("semi-explicit verdict unavailable: {e}")),
    }
    Ok(())
}

fn explicit(model: &DaeModel, xp: &[f64], cfg: &AnalysisConfig, report: &mut Report) -> Res {
    let cs = explicitate(model, xp, cfg)?;
    report.section("explicitation", &summarize(&cs, xp, cfg)?);
    Ok(())
}

fn zerodyn(model: &DaeModel, xp: &[f64], cfg: &AnalysisConfig, report: &mut Report) -> Res {
    let cs = explicitate(model, xp, cfg)?;
    let zd = run_zero_dynamics(&cs, xp, cfg)?;
    report.warnings.extend(zd.trace.warnings.iter().cloned());
    report.section("zero_dynamics", &zd.trace);
    match crosscheck_nk_equals_mk(model, &cs, xp, cfg) {
        Ok(c) => report.section("crosscheck", &c),
        Err(e) => report.warnings.push(format!("N_k = M_k cross-check unavailable: {e}")),
    }
    if model.l() == model.n() {
        match nwf1_indices(model, xp, cfg) {
            Ok(r) => report.section("nwf1", &r),
            Err(e) => report.warnings.push(format!("NWF1 indices unavailable: {e}")),
        }
    }
    Ok(())
}

fn wong(model: &DaeModel, xp: &[f64], cfg: &AnalysisConfig, report: &mut Report) -> Res {
    let (e, h, source) = if model.is_linear() {
        let (e, h) = model.pencil()?;
        (e, h, "linear model")
    } else {
        let (e, h, _) = linearize_at(model, xp)?;
        report.warnings.push("nonlinear model: Wong sequences of the linearization at the base point".into());
        (e, h, "linearization")
    };
    let p = LinearPencil::new(e, h)?;
    let regular = if p.is_square() { Some(is_regular(&p, cfg.seed)?) } else { None };
    report.section("wong", &WongReport { source, v_dims: dims(&wong_v(&p)?), w_dims: dims(&wong_w(&p)?), regular });
    Ok(())
}

fn wf(model: &DaeModel, cfg: &AnalysisConfig, report: &mut Report) -> Res {
    let (e, h) = model.pencil()?;
    let d = quasi_weierstrass(&LinearPencil::new(e, h)?, cfg.seed)?;
    report.section(
        "weierstrass",
        &WfReport {
            indices: d.indices.clone(),
            n_slow: d.n_slow,
            n_fast: d.n_fast,
            a: rows(&d.a),
            nilpotent: rows(&d.nilpotent),
            q: rows(&d.q),
            p: rows(&d.p),
            residuals: d.residuals.clone(),
        },
    );
    Ok(())
}

fn simulate(model: &DaeModel, xp: &[f64], cfg: &AnalysisConfig, report: &mut Report, csv: &mut Option<String>) -> Res {
    let red = run_reduction(model, xp, cfg)?;
    report.warnings.extend(red.trace.warnings.iter().cloned());
    let reduced = red.reduced.ok_or_else(|| daegeo::Error::Inconsistent("base point is not consistent; nothing to integrate".into()))?;
    let (traj, policy) = if reduced.internally_regular {
        (integrate(&reduced, xp, cfg.tmax, cfg.dt)?, "unique")
    } else {
        report.warnings.push(format!("not internally regular: {} free rates held at zero", reduced.free_dim()));
        (integrate_free(&reduced, xp, &zero_policy(&reduced), cfg.tmax, cfg.dt)?, "zero free rates")
    };
    report.warnings.extend(traj.warnings.iter().cloned());
    report.section(
        "summary",
        &SimSummary {
            steps: traj.times.len() - 1,
            t_end: *traj.times.last().unwrap(),
            final_state: traj.last().to_vec(),
            max_res_dyn: traj.max_res_dyn(),
            max_res_con: traj.max_res_con(),
            policy,
        },
    );
    *csv = Some(traj.to_csv(&model.states));
    report.section("trajectory", &traj);
    Ok(())
}
