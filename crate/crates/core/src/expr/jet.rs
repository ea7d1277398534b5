//! Truncated multivariate Taylor polynomials.
//!
//! A [`Jet`] holds the Taylor coefficients of a smooth function around a base
//! point, in `n` variables up to total degree `order`. Coefficients are stored
//! by graded monomial order, so a jet of effective degree `d` only stores the
//! prefix up to degree `d`; linear data therefore stays cheap at any order.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use num_traits::{One, Zero};

use crate::scalar::Scalar;

/// Monomial bookkeeping shared by all jets of a given `(n, order)`.
pub struct JetSpace {
    n: usize,
    order: usize,
    /// `offsets[d]` = number of monomials of degree `< d`, for `d = 0..=order+1`.
    offsets: Vec<usize>,
    exps: Vec<Vec<u8>>,
    deg: Vec<u8>,
    /// `up[v][i]` = index of monomial `i + e_v`, for `deg(i) < order`.
    up: Vec<Vec<u32>>,
    /// Lazily built product rows: `rows[i][j]` = index of monomial `i + j`.
    rows: Vec<OnceLock<Vec<u32>>>,
}

impl fmt::Debug for JetSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "JetSpace(n={}, order={})", self.n, self.order)
    }
}

fn compositions(n: usize, d: usize, prefix: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if prefix.len() + 1 == n {
        prefix.push(d as u8);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for a in (0..=d).rev() {
        prefix.push(a as u8);
        compositions(n, d - a, prefix, out);
        prefix.pop();
    }
}

impl JetSpace {
    fn build(n: usize, order: usize) -> JetSpace {
        assert!(n >= 1, "jet space needs at least one variable");
        let mut exps = Vec::new();
        let mut offsets = vec![0usize];
        for d in 0..=order {
            compositions(n, d, &mut Vec::with_capacity(n), &mut exps);
            offsets.push(exps.len());
        }
        let deg: Vec<u8> = exps
            .iter()
            .map(|e| e.iter().map(|&a| a as u32).sum::<u32>() as u8)
            .collect();
        let index: HashMap<&[u8], u32> = exps
            .iter()
            .enumerate()
            .map(|(i, e)| (e.as_slice(), i as u32))
            .collect();
        let lower = offsets[order];
        let mut up = vec![Vec::with_capacity(lower); n];
        let mut buf = vec![0u8; n];
        for e in exps.iter().take(lower) {
            for (v, row) in up.iter_mut().enumerate() {
                buf.copy_from_slice(e);
                buf[v] += 1;
                row.push(index[buf.as_slice()]);
            }
        }
        let rows = (0..exps.len()).map(|_| OnceLock::new()).collect();
        JetSpace {
            n,
            order,
            offsets,
            exps,
            deg,
            up,
            rows,
        }
    }

    /// Shared space for `n` variables truncated at `order`.
    pub fn get(n: usize, order: usize) -> Arc<JetSpace> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<JetSpace>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("jet space cache poisoned");
        guard
            .entry((n, order))
            .or_insert_with(|| Arc::new(JetSpace::build(n, order)))
            .clone()
    }

    pub fn nvars(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of coefficients of a jet of effective degree `d`.
    fn len_for(&self, d: usize) -> usize {
        self.offsets[d.min(self.order) + 1]
    }

    fn degree_of_len(&self, len: usize) -> usize {
        self.offsets[1..].iter().position(|&o| o >= len).unwrap_or(self.order)
    }

    fn row(&self, i: usize) -> &[u32] {
        self.rows[i].get_or_init(|| {
            let d = self.deg[i] as usize;
            let len = self.offsets[self.order - d + 1];
            if d == 0 {
                return (0..len as u32).collect();
            }
            let v = self.exps[i].iter().position(|&a| a > 0).unwrap();
            let mut parent = self.exps[i].clone();
            parent[v] -= 1;
            let pi = self.index_of(&parent);
            let prow = self.row(pi);
            prow[..len].iter().map(|&t| self.up[v][t as usize]).collect()
        })
    }

    fn index_of(&self, e: &[u8]) -> usize {
        let d: usize = e.iter().map(|&a| a as usize).sum();
        let (lo, hi) = (self.offsets[d], self.offsets[d + 1]);
        (lo..hi).find(|&i| self.exps[i] == e).expect("monomial outside jet space")
    }
}

/// Truncated Taylor expansion `sum c_a h^a` of a function around a point.
#[derive(Clone)]
pub struct Jet {
    sp: Option<Arc<JetSpace>>,
    c: Vec<f64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Jet({:?})", self.c)
    }
}

impl PartialEq for Jet {
    fn eq(&self, o: &Self) -> bool {
        let n = self.c.len().max(o.c.len());
        (0..n).all(|i| self.coeff(i) == o.coeff(i))
    }
}

impl Jet {
    pub fn constant(v: f64) -> Jet {
        Jet { sp: None, c: vec![v] }
    }

    /// Seeds `x0 + h` as jets of the given order.
    pub fn seed(x0: &[f64], order: usize) -> Vec<Jet> {
        let sp = JetSpace::get(x0.len(), order);
        (0..x0.len())
            .map(|i| {
                if order == 0 {
                    return Jet { sp: Some(sp.clone()), c: vec![x0[i]] };
                }
                let mut c = vec![0.0; sp.len_for(1)];
                c[0] = x0[i];
                c[1 + i] = 1.0;
                Jet { sp: Some(sp.clone()), c }
            })
            .collect()
    }

    pub fn space(&self) -> Option<&Arc<JetSpace>> {
        self.sp.as_ref()
    }

    /// Truncation order, `None` for a bare constant.
    pub fn order(&self) -> Option<usize> {
        self.sp.as_ref().map(|s| s.order)
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    fn coeff(&self, i: usize) -> f64 {
        self.c.get(i).copied().unwrap_or(0.0)
    }

    fn degree(&self) -> usize {
        match &self.sp {
            None => 0,
            Some(sp) => sp.degree_of_len(self.c.len()),
        }
    }

    pub fn is_constant(&self) -> bool {
        self.c.len() == 1
    }

    /// First partial derivatives at the base point.
    pub fn gradient(&self, n: usize) -> Vec<f64> {
        (0..n).map(|v| self.coeff(1 + v)).collect()
    }

    /// Taylor coefficient of the monomial with exponents `e`.
    pub fn coefficient(&self, e: &[u8]) -> f64 {
        match &self.sp {
            None => {
                if e.iter().all(|&a| a == 0) {
                    self.c[0]
                } else {
                    0.0
                }
            }
            Some(sp) => {
                let d: usize = e.iter().map(|&a| a as usize).sum();
                if d > sp.order {
                    return 0.0;
                }
                self.coeff(sp.index_of(e))
            }
        }
    }

    /// Drops every term above `order`.
    pub fn truncate(&self, order: usize) -> Jet {
        match &self.sp {
            None => self.clone(),
            Some(sp) if sp.order <= order => self.clone(),
            Some(sp) => {
                let nsp = JetSpace::get(sp.n, order);
                let len = self.c.len().min(nsp.len_for(order));
                Jet { sp: Some(nsp), c: self.c[..len].to_vec() }
            }
        }
    }

    /// Exact partial derivative in variable `v`; the order drops by one.
    pub fn derivative(&self, v: usize) -> Jet {
        let sp = match &self.sp {
            None => return Jet::constant(0.0),
            Some(sp) => sp,
        };
        if sp.order == 0 {
            return Jet::constant(0.0);
        }
        let nsp = JetSpace::get(sp.n, sp.order - 1);
        let d = self.degree();
        if d == 0 {
            return Jet { sp: Some(nsp), c: vec![0.0] };
        }
        let len = nsp.len_for(d - 1);
        let c = (0..len)
            .map(|i| (nsp.exps[i][v] as f64 + 1.0) * self.coeff(sp.up[v][i] as usize))
            .collect();
        Jet { sp: Some(nsp), c }
    }

    fn common(a: &Jet, b: &Jet) -> Option<Arc<JetSpace>> {
        match (&a.sp, &b.sp) {
            (None, None) => None,
            (Some(s), None) | (None, Some(s)) => Some(s.clone()),
            (Some(s), Some(t)) => {
                assert_eq!(s.n, t.n, "jets over different variable counts");
                Some(if s.order <= t.order { s.clone() } else { t.clone() })
            }
        }
    }

    fn map_coeffs(&self, f: impl Fn(f64) -> f64) -> Jet {
        Jet { sp: self.sp.clone(), c: self.c.iter().map(|&x| f(x)).collect() }
    }

    fn scaled(&self, k: f64) -> Jet {
        self.map_coeffs(|x| x * k)
    }

    /// Evaluates `sum_j t[j] (self - self(0))^j` by Horner's rule.
    fn compose(&self, t: &[f64]) -> Jet {
        if self.is_constant() {
            return Jet { sp: self.sp.clone(), c: vec![t[0]] };
        }
        let mut delta = self.clone();
        delta.c[0] = 0.0;
        let mut acc = Jet::constant(t[t.len() - 1]);
        for &tj in t[..t.len() - 1].iter().rev() {
            acc = acc * delta.clone();
            acc.c[0] += tj;
        }
        acc
    }

    fn series_len(&self) -> usize {
        self.sp.as_ref().map_or(0, |s| s.order) + 1
    }

    fn recip(&self) -> Jet {
        let a = self.c[0];
        let t: Vec<f64> = (0..self.series_len())
            .map(|j| if j % 2 == 0 { 1.0 } else { -1.0 } / a.powi(j as i32 + 1))
            .collect();
        self.compose(&t)
    }

    /// `self^r` for a constant real `r` and a positive value.
    pub fn powr(&self, r: f64) -> Jet {
        let a = self.c[0];
        let mut t = Vec::with_capacity(self.series_len());
        let mut binom = 1.0;
        for j in 0..self.series_len() {
            t.push(binom * a.powf(r - j as f64));
            binom *= (r - j as f64) / (j as f64 + 1.0);
        }
        self.compose(&t)
    }
}

fn factorials(k: usize) -> Vec<f64> {
    let mut f = vec![1.0; k];
    for j in 1..k {
        f[j] = f[j - 1] * j as f64;
    }
    f
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        let sp = Jet::common(&self, &o);
        let cap = sp.as_ref().map_or(1, |s| s.len_for(s.order));
        let len = self.c.len().max(o.c.len()).min(cap);
        let c = (0..len).map(|i| self.coeff(i) + o.coeff(i)).collect();
        Jet { sp, c }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.map_coeffs(|x| -x)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        if o.is_constant() {
            let sp = Jet::common(&self, &o);
            let mut r = self.scaled(o.c[0]);
            if r.sp.is_none() {
                r.sp = o.sp;
            }
            return match sp {
                Some(s) => r.truncate(s.order),
                None => r,
            };
        }
        if self.is_constant() {
            return o * self;
        }
        let sp = Jet::common(&self, &o).unwrap();
        let k = sp.order;
        let (da, db) = (self.degree().min(k), o.degree().min(k));
        let mut out = vec![0.0; sp.len_for(da + db)];
        let la = sp.len_for(da).min(self.c.len());
        for i in 0..la {
            let ai = self.c[i];
            if ai == 0.0 {
                continue;
            }
            let di = sp.deg[i] as usize;
            let lb = sp.len_for(db.min(k - di)).min(o.c.len());
            let row = sp.row(i);
            for j in 0..lb {
                out[row[j] as usize] += ai * o.c[j];
            }
        }
        Jet { sp: Some(sp), c: out }
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        if o.is_constant() {
            let sp = Jet::common(&self, &o);
            let mut r = self.scaled(1.0 / o.c[0]);
            if r.sp.is_none() {
                r.sp = o.sp;
            }
            return match sp {
                Some(s) => r.truncate(s.order),
                None => r,
            };
        }
        let r = o.recip();
        self * r
    }
}

impl Zero for Jet {
    fn zero() -> Jet {
        Jet::constant(0.0)
    }
    fn is_zero(&self) -> bool {
        self.c.iter().all(|&x| x == 0.0)
    }
}

impl One for Jet {
    fn one() -> Jet {
        Jet::constant(1.0)
    }
}

impl Scalar for Jet {
    fn from_f64(v: f64) -> Jet {
        Jet::constant(v)
    }
    fn re(&self) -> f64 {
        self.c[0]
    }
    fn sin(&self) -> Jet {
        let (s, c) = self.c[0].sin_cos();
        let cyc = [s, c, -s, -c];
        let f = factorials(self.series_len());
        let t: Vec<f64> = (0..f.len()).map(|j| cyc[j % 4] / f[j]).collect();
        self.compose(&t)
    }
    fn cos(&self) -> Jet {
        let (s, c) = self.c[0].sin_cos();
        let cyc = [c, -s, -c, s];
        let f = factorials(self.series_len());
        let t: Vec<f64> = (0..f.len()).map(|j| cyc[j % 4] / f[j]).collect();
        self.compose(&t)
    }
    fn exp(&self) -> Jet {
        let e = self.c[0].exp();
        let t: Vec<f64> = factorials(self.series_len()).iter().map(|f| e / f).collect();
        self.compose(&t)
    }
    fn ln(&self) -> Jet {
        let a = self.c[0];
        let t: Vec<f64> = (0..self.series_len())
            .map(|j| match j {
                0 => a.ln(),
                _ => {
                    let s = if j % 2 == 1 { 1.0 } else { -1.0 };
                    s / (j as f64 * a.powi(j as i32))
                }
            })
            .collect();
        self.compose(&t)
    }
    fn sqrt(&self) -> Jet {
        self.powr(0.5)
    }
    fn powi(&self, n: i32) -> Jet {
        let mut acc = Jet::one();
        for _ in 0..n.unsigned_abs() {
            acc = acc * self.clone();
        }
        if acc.sp.is_none() {
            acc.sp = self.sp.clone();
        }
        if n < 0 {
            acc.recip()
        } else {
            acc
        }
    }
    fn powf(&self, e: &Jet) -> Jet {
        if e.is_constant() {
            return self.powr(e.c[0]);
        }
        (e.clone() * self.ln()).exp()
    }
    fn scale(&self, k: f64) -> Jet {
        self.scaled(k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_of_linear_jets() {
        let x = Jet::seed(&[2.0, 3.0], 2);
        let p = x[0].clone() * x[1].clone();
        assert_eq!(p.value(), 6.0);
        assert_eq!(p.gradient(2), vec![3.0, 2.0]);
        assert_eq!(p.coefficient(&[1, 1]), 1.0);
        assert_eq!(p.coefficient(&[2, 0]), 0.0);
    }

    #[test]
    fn exp_series_matches_factorials() {
        let x = Jet::seed(&[0.0], 5);
        let e = x[0].exp();
        for k in 0..=5u8 {
            let f: f64 = (1..=k as u32).map(|i| i as f64).product();
            assert!((e.coefficient(&[k]) - 1.0 / f).abs() < 1e-15);
        }
    }

    #[test]
    fn derivative_shifts_coefficients() {
        let x = Jet::seed(&[1.0, 2.0], 3);
        let f = x[0].clone() * x[0].clone() * x[1].clone();
        let dfx = f.derivative(0);
        assert_eq!(dfx.order(), Some(2));
        assert!((dfx.value() - 4.0).abs() < 1e-14);
        assert_eq!(dfx.gradient(2), vec![4.0, 2.0]);
    }

    #[test]
    fn ln_and_recip_are_inverse_operations() {
        let x = Jet::seed(&[0.7, 1.3], 4);
        let y = (x[0].clone() * x[1].clone()).ln().exp();
        let z = x[0].clone() * x[1].clone();
        for (a, b) in y.coeffs().iter().zip(z.coeffs()) {
            assert!((a - b).abs() < 1e-12);
        }
        let one = z.clone() / z;
        assert!((one.value() - 1.0).abs() < 1e-14);
        assert!(one.coeffs()[1..].iter().all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn mixed_orders_truncate_to_lower() {
        let a = Jet::seed(&[1.0], 4);
        let b = Jet::seed(&[1.0], 2);
        let p = a[0].clone() * b[0].clone();
        assert_eq!(p.order(), Some(2));
    }
}
