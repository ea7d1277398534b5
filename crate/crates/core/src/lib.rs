//! Numerical geometric analysis of nonlinear differential-algebraic equations
//! `E(x) x' = F(x)`: geometric reduction to the maximal invariant submanifold,
//! explicitation as control systems, zero dynamics, Wong sequences and
//! integration on the reduced manifold.

pub mod control;
pub mod error;
pub mod explicit;
pub mod expr;
pub mod linear;
pub mod model;
pub mod numlin;
pub mod reduction;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use expr::{Dual, Expr, Jet, SmoothMap, VectorField};
pub use model::{AnalysisConfig, DaeModel};
pub use scalar::Scalar;

/// Working precision of the analysis pipeline.
pub type Real = f64;
/// First-order dual number over [`Real`].
pub type Dual64 = Dual<f64>;
/// First-order dual number over `f32`.
pub type Dual32 = Dual<f32>;
