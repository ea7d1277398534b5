use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_traits::{Float, One, Zero};

/// Number type every smooth map can be evaluated on.
///
/// Implemented for `f32`, `f64`, first-order [`Dual`](crate::Dual) numbers and
/// truncated Taylor [`Jet`](crate::Jet)s. Branching decisions (pivots, domain
/// checks) only ever look at [`Scalar::re`].
pub trait Scalar:
    Clone
    + Debug
    + Send
    + Sync
    + 'static
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    /// Value part, used for every branching decision.
    fn re(&self) -> f64;

    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn tan(&self) -> Self {
        self.sin() / self.cos()
    }
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn abs(&self) -> Self {
        if self.re() < 0.0 {
            -self.clone()
        } else {
            self.clone()
        }
    }

    /// Integer power by repeated multiplication.
    fn powi(&self, n: i32) -> Self {
        let mut acc = Self::one();
        for _ in 0..n.unsigned_abs() {
            acc = acc * self.clone();
        }
        if n < 0 {
            Self::one() / acc
        } else {
            acc
        }
    }

    /// Real power for a positive base.
    fn powf(&self, e: &Self) -> Self {
        (e.clone() * self.ln()).exp()
    }

    fn scale(&self, k: f64) -> Self {
        self.clone() * Self::from_f64(k)
    }
}

macro_rules! float_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            fn re(&self) -> f64 {
                *self as f64
            }
            fn sin(&self) -> Self {
                Float::sin(*self)
            }
            fn cos(&self) -> Self {
                Float::cos(*self)
            }
            fn tan(&self) -> Self {
                Float::tan(*self)
            }
            fn exp(&self) -> Self {
                Float::exp(*self)
            }
            fn ln(&self) -> Self {
                Float::ln(*self)
            }
            fn sqrt(&self) -> Self {
                Float::sqrt(*self)
            }
            fn abs(&self) -> Self {
                Float::abs(*self)
            }
            fn powf(&self, e: &Self) -> Self {
                Float::powf(*self, *e)
            }
        }
    };
}

float_scalar!(f32);
float_scalar!(f64);
