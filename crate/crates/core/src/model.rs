//! DAE models `E(x) x' = F(x)`, their file format, and analysis settings.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, ParseError, Result};
use crate::expr::{fmt_number, parse_expression, ExprMap, Expr, Jet, VectorField};
use crate::numlin::MatrixMap;

/// Tolerances, sampling and integration settings shared by every analysis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    /// Relative rank tolerance; `None` means `1e-10 * max(rows, cols)`.
    pub tol_rank: Option<f64>,
    pub tol_residual: f64,
    pub samples: usize,
    pub radius: f64,
    pub seed: u64,
    /// `None` means `n + 1`.
    pub max_steps: Option<usize>,
    pub condition_bound: f64,
    pub dt: f64,
    pub tmax: f64,
    /// Target constraint residual for Gauss-Newton projection.
    pub projection_tol: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            tol_rank: None,
            tol_residual: 1e-8,
            samples: 32,
            radius: 1e-2,
            seed: 0,
            max_steps: None,
            condition_bound: 1e8,
            dt: 1e-3,
            tmax: 1.0,
            projection_tol: 1e-12,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tol_residual", self.tol_residual),
            ("radius", self.radius),
            ("condition_bound", self.condition_bound),
            ("dt", self.dt),
            ("projection_tol", self.projection_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Model(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(t) = self.tol_rank {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Model(format!("tol_rank must be positive, got {t}")));
            }
        }
        if self.samples == 0 {
            return Err(Error::Model("samples must be at least 1".into()));
        }
        if self.max_steps == Some(0) {
            return Err(Error::Model("max_steps must be at least 1".into()));
        }
        if !(self.tmax >= 0.0) {
            return Err(Error::Model("tmax must be non-negative".into()));
        }
        Ok(())
    }

    pub fn max_steps_for(&self, n: usize) -> usize {
        self.max_steps.unwrap_or(n + 1)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Nonlinear,
    Linear,
}

/// `E(x) x' = F(x)` with `l` equations in `n` states.
#[derive(Clone, Debug, PartialEq)]
pub struct DaeModel {
    pub name: String,
    pub states: Vec<String>,
    pub e: Vec<Vec<Expr>>,
    pub f: Vec<Expr>,
    /// Numeric `H` when the model was given in `[H]` form.
    pub h: Option<DMatrix<f64>>,
    pub base_point: Option<Vec<f64>>,
    pub kind: ModelKind,
}

impl DaeModel {
    /// Builds and validates a model from expression data.
    pub fn new(name: &str, states: Vec<String>, e: Vec<Vec<Expr>>, f: Vec<Expr>) -> Result<DaeModel> {
        let m = DaeModel { name: name.into(), states, e, f, h: None, base_point: None, kind: ModelKind::Nonlinear };
        m.check_shapes()?;
        Ok(m)
    }

    /// Linear model `E x' = H x`.
    pub fn linear(name: &str, e: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<DaeModel> {
        if e.shape() != h.shape() {
            return Err(Error::Dimension("E and H must have the same shape".into()));
        }
        let (l, n) = e.shape();
        let states = (1..=n).map(|i| format!("x{i}")).collect();
        let e_ex = (0..l).map(|i| (0..n).map(|j| Expr::Const(e[(i, j)])).collect()).collect();
        let m = DaeModel {
            name: name.into(),
            states,
            e: e_ex,
            f: linear_rows(h),
            h: Some(h.clone()),
            base_point: None,
            kind: ModelKind::Linear,
        };
        m.check_shapes()?;
        Ok(m)
    }

    pub fn with_point(mut self, x: Vec<f64>) -> Result<DaeModel> {
        if x.len() != self.n() {
            return Err(Error::Dimension(format!("point has {} entries, model has {} states", x.len(), self.n())));
        }
        self.base_point = Some(x);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.states.len()
    }

    pub fn l(&self) -> usize {
        self.f.len()
    }

    pub fn is_linear(&self) -> bool {
        self.kind == ModelKind::Linear
    }

    fn check_shapes(&self) -> Result<()> {
        let n = self.n();
        if self.e.len() != self.l() {
            return Err(Error::Dimension(format!("E has {} rows, F has {} entries", self.e.len(), self.l())));
        }
        for row in &self.e {
            if row.len() != n {
                return Err(Error::Dimension(format!("E row has {} entries, expected {n}", row.len())));
            }
        }
        let all = self.e.iter().flatten().chain(self.f.iter());
        if let Some(v) = all.filter_map(Expr::max_var).find(|&v| v >= n) {
            return Err(Error::Dimension(format!("variable index {v} outside {n} states")));
        }
        Ok(())
    }

    pub fn e_map(&self) -> MatrixMap {
        let exprs = self.e.iter().flatten().cloned().collect();
        let map = ExprMap::new(self.n(), exprs).expect("shapes validated");
        MatrixMap::new(self.l(), self.n(), Arc::new(map)).expect("shapes validated")
    }

    pub fn f_map(&self) -> VectorField {
        Arc::new(ExprMap::new(self.n(), self.f.clone()).expect("shapes validated"))
    }

    pub fn e_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(x)?;
        self.e_map().value(x)
    }

    pub fn f_at(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.check_point(x)?;
        Ok(DVector::from_vec(crate::expr::eval(self.f_map().as_ref(), x)?))
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::Dimension(format!("point has {} entries, model has {} states", x.len(), self.n())));
        }
        Ok(())
    }

    /// Base point, or an error naming the missing input.
    pub fn point(&self) -> Result<Vec<f64>> {
        self.base_point
            .clone()
            .ok_or_else(|| Error::Model(format!("model `{}` has no base point; pass one explicitly", self.name)))
    }

    /// `(E, H)` of a linear model.
    pub fn pencil(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        if !self.is_linear() {
            return Err(Error::Model(format!("model `{}` is not linear", self.name)));
        }
        let zero = vec![0.0; self.n()];
        let (e, h, _) = linearize_at(self, &zero)?;
        Ok((e, h))
    }

    /// Checks that `E` is constant and `F` is linear at three random points.
    fn validate_linear(&self) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x11ea);
        let n = self.n();
        let zero = vec![0.0; n];
        let f0 = self.f_at(&zero)?;
        if f0.amax() > 1e-12 {
            return Err(Error::Model("linear model has a non-zero constant term in F".into()));
        }
        for _ in 0..3 {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let ej = self.e_map().map.expand(&x, 1)?;
            if ej.iter().any(|j| j.gradient(n).iter().any(|g| g.abs() > 1e-12)) {
                return Err(Error::Model("linear model has a non-constant E entry".into()));
            }
            let fj = self.f_map().expand(&x, 2)?;
            let second = |j: &Jet| {
                let mut e = vec![0u8; n];
                let mut worst = 0.0f64;
                for a in 0..n {
                    for b in a..n {
                        e[a] += 1;
                        e[b] += 1;
                        worst = worst.max(j.coefficient(&e).abs());
                        e[a] -= 1;
                        e[b] -= 1;
                    }
                }
                worst
            };
            if fj.iter().any(|j| second(j) > 1e-12) {
                return Err(Error::Model("linear model has a non-affine F entry".into()));
            }
        }
        Ok(())
    }

    /// Parses the model file format.
    pub fn parse(text: &str) -> Result<DaeModel> {
        Loader::default().run(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<DaeModel> {
        let text = std::fs::read_to_string(path)?;
        DaeModel::parse(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Renders the model in the file format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[model]");
        let _ = writeln!(s, "name = \"{}\"", self.name);
        let _ = writeln!(s, "states = {}", self.states.join(" "));
        let _ = writeln!(s, "linear = {}", self.is_linear());
        let _ = writeln!(s, "[E]");
        for (i, row) in self.e.iter().enumerate() {
            for (j, ex) in row.iter().enumerate() {
                if !ex.is_zero() {
                    let _ = writeln!(s, "{},{} = {}", i + 1, j + 1, ex.to_text(&self.states));
                }
            }
        }
        match &self.h {
            Some(h) => {
                let _ = writeln!(s, "[H]");
                for i in 0..h.nrows() {
                    for j in 0..h.ncols() {
                        if h[(i, j)] != 0.0 {
                            let _ = writeln!(s, "{},{} = {}", i + 1, j + 1, fmt_number(h[(i, j)]));
                        }
                    }
                }
            }
            None => {
                let _ = writeln!(s, "[F]");
                for (i, ex) in self.f.iter().enumerate() {
                    let _ = writeln!(s, "{} = {}", i + 1, ex.to_text(&self.states));
                }
            }
        }
        if let Some(p) = &self.base_point {
            let _ = writeln!(s, "[point]");
            for (name, v) in self.states.iter().zip(p) {
                let _ = writeln!(s, "{name} = {}", fmt_number(*v));
            }
        }
        s
    }
}

fn linear_rows(h: &DMatrix<f64>) -> Vec<Expr> {
    (0..h.nrows())
        .map(|i| {
            let mut acc: Option<Expr> = None;
            for j in 0..h.ncols() {
                let c = h[(i, j)];
                if c == 0.0 {
                    continue;
                }
                let term = if c == 1.0 { Expr::var(j) } else { Expr::Const(c) * Expr::var(j) };
                acc = Some(match acc {
                    None => term,
                    Some(a) => a + term,
                });
            }
            acc.unwrap_or(Expr::Const(0.0))
        })
        .collect()
}

/// `E0 = E(x)`, `H0 = DF(x)`, `c0 = F(x) - H0 x`.
pub fn linearize_at(model: &DaeModel, x: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>, DVector<f64>)> {
    let e0 = model.e_at(x)?;
    let fj = model.f_map().expand(x, 1)?;
    let n = model.n();
    let h0 = DMatrix::from_fn(model.l(), n, |i, j| fj[i].gradient(n)[j]);
    let fx = DVector::from_iterator(model.l(), fj.iter().map(Jet::value));
    let c0 = fx - &h0 * DVector::from_column_slice(x);
    Ok((e0, h0, c0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Section {
    None,
    Model,
    E,
    F,
    H,
    Point,
}

#[derive(Default)]
struct Loader {
    name: Option<String>,
    states: Option<Vec<String>>,
    linear: bool,
    e: Vec<(usize, usize, Expr)>,
    f: Vec<(usize, Expr)>,
    h: Vec<(usize, usize, f64)>,
    point: Vec<(usize, f64)>,
    seen_f: bool,
    seen_h: bool,
}

fn perr(line: usize, col: usize, msg: impl Into<String>) -> Error {
    Error::Parse(ParseError::at(line, col, msg))
}

fn parse_index(s: &str, line: usize, col: usize) -> Result<usize> {
    let i: usize = s.trim().parse().map_err(|_| perr(line, col, format!("bad index `{}`", s.trim())))?;
    if i == 0 {
        return Err(perr(line, col, "indices are 1-based"));
    }
    Ok(i - 1)
}

fn parse_number(s: &str, line: usize, col: usize) -> Result<f64> {
    let t = s.trim();
    t.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| perr(line, col, format!("expected a number, found `{t}`")))
}

impl Loader {
    fn run(mut self, text: &str) -> Result<DaeModel> {
        let mut section = Section::None;
        for (ln, raw) in text.lines().enumerate() {
            let line = ln + 1;
            let content = raw.split('#').next().unwrap_or("");
            let trimmed = content.trim();
            if trimmed.is_empty() {
                continue;
            }
            if trimmed.starts_with('[') {
                let next = match trimmed {
                    "[model]" => Section::Model,
                    "[E]" => Section::E,
                    "[F]" => Section::F,
                    "[H]" => Section::H,
                    "[point]" => Section::Point,
                    other => return Err(perr(line, 1, format!("unknown section `{other}`"))),
                };
                if next <= section {
                    return Err(perr(line, 1, format!("section `{trimmed}` out of order")));
                }
                if next == Section::H && self.seen_f {
                    return Err(perr(line, 1, "[H] and [F] are alternatives"));
                }
                self.seen_f |= next == Section::F;
                self.seen_h |= next == Section::H;
                section = next;
                continue;
            }
            let eq = content
                .find('=')
                .ok_or_else(|| perr(line, 1, "expected `key = value`"))?;
            let (key, value) = (&content[..eq], &content[eq + 1..]);
            let vcol = eq + 2 + (value.len() - value.trim_start().len());
            match section {
                Section::None => return Err(perr(line, 1, "content before the [model] section")),
                Section::Model => self.model_key(key.trim(), value.trim(), line, vcol)?,
                Section::E => {
                    let (i, j) = self.pair(key, line)?;
                    let ex = self.expr(value, line, vcol)?;
                    self.e.push((i, j, ex));
                }
                Section::F => {
                    let i = parse_index(key, line, 1)?;
                    let ex = self.expr(value, line, vcol)?;
                    self.f.push((i, ex));
                }
                Section::H => {
                    let (i, j) = self.pair(key, line)?;
                    self.h.push((i, j, parse_number(value, line, vcol)?));
                }
                Section::Point => {
                    let states = self.states.as_ref().ok_or_else(|| perr(line, 1, "states not declared"))?;
                    let name = key.trim();
                    let k = states
                        .iter()
                        .position(|s| s == name)
                        .ok_or_else(|| perr(line, 1, format!("undeclared state `{name}`")))?;
                    self.point.push((k, parse_number(value, line, vcol)?));
                }
            }
        }
        self.finish()
    }

    fn model_key(&mut self, key: &str, value: &str, line: usize, col: usize) -> Result<()> {
        match key {
            "name" => self.name = Some(value.trim_matches('"').to_string()),
            "states" => {
                let states: Vec<String> = value.split_whitespace().map(str::to_string).collect();
                if states.is_empty() {
                    return Err(perr(line, col, "no states declared"));
                }
                for s in &states {
                    let ok = s.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
                        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
                    if !ok || crate::expr::Func::from_name(s).is_some() {
                        return Err(perr(line, col, format!("invalid state name `{s}`")));
                    }
                }
                self.states = Some(states);
            }
            "linear" => {
                self.linear = match value {
                    "true" => true,
                    "false" => false,
                    other => return Err(perr(line, col, format!("linear must be true or false, found `{other}`"))),
                }
            }
            other => return Err(perr(line, 1, format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    fn pair(&self, key: &str, line: usize) -> Result<(usize, usize)> {
        let (a, b) = key.split_once(',').ok_or_else(|| perr(line, 1, "expected `i,j`"))?;
        Ok((parse_index(a, line, 1)?, parse_index(b, line, 1)?))
    }

    fn expr(&self, text: &str, line: usize, col: usize) -> Result<Expr> {
        let states = self.states.as_ref().ok_or_else(|| perr(line, 1, "states not declared"))?;
        let t = text.trim();
        parse_expression(t, states).map_err(|e| perr(line, col + e.column - 1, e.message))
    }

    fn finish(self) -> Result<DaeModel> {
        let states = self.states.ok_or_else(|| Error::Model("missing [model] states".into()))?;
        let n = states.len();
        if !self.seen_f && !self.seen_h {
            return Err(Error::Model("missing [F] section".into()));
        }
        if self.seen_h && !self.linear {
            return Err(Error::Model("[H] is only allowed in linear models".into()));
        }
        let rows_e = self.e.iter().map(|t| t.0 + 1).max().unwrap_or(0);
        let l = if self.seen_f {
            let l = self.f.iter().map(|t| t.0 + 1).max().unwrap_or(0);
            if rows_e > l {
                return Err(Error::Dimension(format!("E has row {rows_e} but F has only {l} entries")));
            }
            l
        } else {
            self.h.iter().map(|t| t.0 + 1).max().unwrap_or(0).max(rows_e)
        };
        let mut e = vec![vec![Expr::Const(0.0); n]; l];
        for (i, j, ex) in self.e {
            if j >= n {
                return Err(Error::Dimension(format!("E column {} exceeds {n} states", j + 1)));
            }
            e[i][j] = ex;
        }
        let (f, h) = if self.seen_f {
            let mut f: Vec<Option<Expr>> = vec![None; l];
            for (i, ex) in self.f {
                if f[i].replace(ex).is_some() {
                    return Err(Error::Model(format!("F row {} given twice", i + 1)));
                }
            }
            let f = f
                .into_iter()
                .enumerate()
                .map(|(i, x)| x.ok_or_else(|| Error::Dimension(format!("F row {} missing", i + 1))))
                .collect::<Result<Vec<_>>>()?;
            (f, None)
        } else {
            let mut h = DMatrix::zeros(l, n);
            for (i, j, v) in self.h {
                if j >= n {
                    return Err(Error::Dimension(format!("H column {} exceeds {n} states", j + 1)));
                }
                h[(i, j)] = v;
            }
            (linear_rows(&h), Some(h))
        };
        let base_point = if self.point.is_empty() {
            None
        } else {
            let mut p = vec![0.0; n];
            for (k, v) in self.point {
                p[k] = v;
            }
            Some(p)
        };
        let model = DaeModel {
            name: self.name.unwrap_or_else(|| "unnamed".into()),
            states,
            e,
            f,
            h,
            base_point,
            kind: if self.linear { ModelKind::Linear } else { ModelKind::Nonlinear },
        };
        model.check_shapes()?;
        if model.is_linear() {
            model.validate_linear()?;
        }
        Ok(model)
    }
}
