use std::ops::{Add, Div, Mul, Neg, Sub};

use num_traits::{One, Zero};

use crate::scalar::Scalar;

/// First-order forward-mode dual number: a value and its partials along a
/// fixed set of directions.
///
/// An empty `du` stands for a constant in any number of directions.
#[derive(Clone, Debug, PartialEq)]
pub struct Dual<T> {
    pub v: T,
    pub du: Vec<T>,
}

impl<T: Scalar> Dual<T> {
    pub fn constant(v: T) -> Self {
        Dual { v, du: Vec::new() }
    }

    /// The `i`-th of `n` seeded variables with value `v`.
    pub fn variable(v: T, i: usize, n: usize) -> Self {
        let mut du = vec![T::zero(); n];
        du[i] = T::one();
        Dual { v, du }
    }

    pub fn partial(&self, i: usize) -> T {
        self.du.get(i).cloned().unwrap_or_else(T::zero)
    }

    /// Chain rule for a unary function with value `fv` and derivative `d`.
    fn chain(&self, fv: T, d: T) -> Self {
        Dual {
            v: fv,
            du: self.du.iter().map(|x| x.clone() * d.clone()).collect(),
        }
    }

    fn zip(&self, o: &Self, f: impl Fn(T, T) -> T) -> Vec<T> {
        let n = self.du.len().max(o.du.len());
        (0..n).map(|i| f(self.partial(i), o.partial(i))).collect()
    }
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let du = self.zip(&o, |a, b| a + b);
        Dual { v: self.v + o.v, du }
    }
}

impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        let du = self.zip(&o, |a, b| a - b);
        Dual { v: self.v - o.v, du }
    }
}

impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let (a, b) = (self.v.clone(), o.v.clone());
        let du = self.zip(&o, |da, db| da * b.clone() + a.clone() * db);
        Dual { v: self.v * o.v, du }
    }
}

impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let inv = T::one() / o.v.clone();
        let q = self.v.clone() * inv.clone();
        let du = self.zip(&o, |da, db| (da - q.clone() * db) * inv.clone());
        Dual { v: q, du }
    }
}

impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual {
            v: -self.v,
            du: self.du.into_iter().map(|x| -x).collect(),
        }
    }
}

impl<T: Scalar> Zero for Dual<T> {
    fn zero() -> Self {
        Dual::constant(T::zero())
    }
    fn is_zero(&self) -> bool {
        self.v.re() == 0.0 && self.du.iter().all(|d| d.re() == 0.0)
    }
}

impl<T: Scalar> One for Dual<T> {
    fn one() -> Self {
        Dual::constant(T::one())
    }
}

impl<T: Scalar> Scalar for Dual<T> {
    fn from_f64(v: f64) -> Self {
        Dual::constant(T::from_f64(v))
    }
    fn re(&self) -> f64 {
        self.v.re()
    }
    fn sin(&self) -> Self {
        self.chain(self.v.sin(), self.v.cos())
    }
    fn cos(&self) -> Self {
        self.chain(self.v.cos(), -self.v.sin())
    }
    fn tan(&self) -> Self {
        let t = self.v.tan();
        let d = T::one() + t.clone() * t.clone();
        self.chain(t, d)
    }
    fn exp(&self) -> Self {
        let e = self.v.exp();
        self.chain(e.clone(), e)
    }
    fn ln(&self) -> Self {
        self.chain(self.v.ln(), T::one() / self.v.clone())
    }
    fn sqrt(&self) -> Self {
        let s = self.v.sqrt();
        let d = T::one() / (s.clone() + s.clone());
        self.chain(s, d)
    }
    fn abs(&self) -> Self {
        if self.v.re() < 0.0 {
            -self.clone()
        } else {
            self.clone()
        }
    }
}
