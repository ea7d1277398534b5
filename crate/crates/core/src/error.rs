use std::fmt;

use thiserror::Error;

/// Syntax error in an expression or a model file.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl ParseError {
    pub fn at(line: usize, column: usize, message: impl Into<String>) -> Self {
        ParseError { line, column, message: message.into() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DomainKind {
    LogNonPositive,
    SqrtNegative,
    DivisionByZero,
    PowNegativeBase,
    TanPole,
    NonFinite,
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DomainKind::LogNonPositive => "logarithm of a non-positive number",
            DomainKind::SqrtNegative => "square root of a negative number",
            DomainKind::DivisionByZero => "division by zero",
            DomainKind::PowNegativeBase => "non-integer power of a non-positive base",
            DomainKind::TanPole => "tangent at a pole",
            DomainKind::NonFinite => "non-finite value",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(#[from] ParseError),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("domain error in component {component}: {kind}")]
    Domain { component: usize, kind: DomainKind },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("rank of {what} is not constant near the base point: {base} at base, {found} at {witness:?}")]
    RankNotConstant {
        what: String,
        base: usize,
        found: usize,
        witness: Vec<f64>,
    },

    #[error("frozen pivot block of {what} too ill-conditioned (condition {cond:.3e} > {bound:.1e}) at {at:?}")]
    Conditioning {
        what: String,
        cond: f64,
        bound: f64,
        at: Vec<f64>,
    },

    #[error("{0}")]
    NotConverged(String),

    #[error("inconsistent system: {0}")]
    Inconsistent(String),

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("{0}")]
    Unsupported(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
