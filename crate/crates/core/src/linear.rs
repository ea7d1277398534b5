//! Linear DAEs `E x' = H x`: Wong sequences, regularity and the
//! quasi-Weierstrass decomposition.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numlin::{condition_number, image, numerical_rank, preimage, singular_values, spectral_norm, Subspace};

#[derive(Clone, Debug, PartialEq)]
pub struct LinearPencil {
    pub e: DMatrix<f64>,
    pub h: DMatrix<f64>,
}

impl LinearPencil {
    pub fn new(e: DMatrix<f64>, h: DMatrix<f64>) -> Result<LinearPencil> {
        if e.shape() != h.shape() {
            return Err(Error::Dimension(format!("E is {:?}, H is {:?}", e.shape(), h.shape())));
        }
        if e.iter().chain(h.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Dimension("pencil has non-finite entries".into()));
        }
        Ok(LinearPencil { e, h })
    }

    pub fn n(&self) -> usize {
        self.e.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.e.is_square()
    }

    fn require_square(&self) -> Result<()> {
        if !self.is_square() {
            return Err(Error::Dimension(format!("pencil is {}x{}, expected square", self.e.nrows(), self.e.ncols())));
        }
        Ok(())
    }
}

/// Iterates `next` from `start` until the dimension repeats; the repeated
/// (limit) space is included once at the end.
fn until_stable(start: Subspace, limit: usize, mut next: impl FnMut(&Subspace) -> Result<Subspace>) -> Result<Vec<Subspace>> {
    let mut chain = vec![start];
    for _ in 0..=limit {
        let s = next(chain.last().unwrap())?;
        let stable = s.dim() == chain.last().unwrap().dim();
        chain.push(s);
        if stable {
            return Ok(chain);
        }
    }
    Ok(chain)
}

/// `V_0 = R^n`, `V_k = H^{-1} E V_{k-1}`.
pub fn wong_v(p: &LinearPencil) -> Result<Vec<Subspace>> {
    until_stable(Subspace::full(p.n()), p.n(), |v| preimage(&p.h, &image(&p.e, v)?))
}

/// `W_1 = ker E`, `W_{i+1} = E^{-1} H W_i`.
pub fn wong_w(p: &LinearPencil) -> Result<Vec<Subspace>> {
    let w1 = preimage(&p.e, &Subspace::zero(p.e.nrows()))?;
    until_stable(w1, p.n(), |w| preimage(&p.e, &image(&p.h, w)?))
}

pub fn dims(chain: &[Subspace]) -> Vec<usize> {
    chain.iter().map(Subspace::dim).collect()
}

/// `det(sE - H) != 0` at some of `n + 1` seeded random `s`.
pub fn is_regular(p: &LinearPencil, seed: u64) -> Result<bool> {
    p.require_square()?;
    let n = p.n();
    if n == 0 {
        return Ok(true);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ne, nh) = (spectral_norm(&p.e), spectral_norm(&p.h));
    for _ in 0..=n {
        let s: f64 = rng.gen_range(-2.0..2.0);
        let m = &p.e * s - &p.h;
        // Product of singular values is |det| without LU cancellation issues.
        let det: f64 = singular_values(&m).iter().product();
        let scale = (s.abs() * ne + nh).max(f64::MIN_POSITIVE).powi(n as i32);
        if det > 1e-12 * scale {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Block sizes of a nilpotent matrix from the ranks of its powers.
///
/// A singular value of `N^k` counts when it exceeds `tol * max(1, ||N||)^k`.
pub fn nilpotency_indices(nm: &DMatrix<f64>, tol: f64) -> Result<Vec<usize>> {
    if !nm.is_square() {
        return Err(Error::Dimension("nilpotency indices need a square matrix".into()));
    }
    let n = nm.nrows();
    let scale = spectral_norm(nm).max(1.0);
    let mut d = vec![n];
    let mut pw = DMatrix::identity(n, n);
    for k in 1..=n {
        pw = &pw * nm;
        let thr = tol * scale.powi(k as i32);
        let r = singular_values(&pw).iter().filter(|&&s| s > thr).count();
        d.push(r);
        if r == 0 {
            break;
        }
    }
    if *d.last().unwrap() != 0 {
        return Err(Error::Assumption(format!("matrix is not nilpotent: rank sequence {d:?}")));
    }
    let mut out = Vec::new();
    for k in 1..d.len() {
        let at_least_k = d[k - 1] - d[k];
        let at_least_k1 = if k + 1 < d.len() { d[k] - d[k + 1] } else { 0 };
        out.extend(std::iter::repeat(k).take(at_least_k - at_least_k1));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `||Q E P^{-1} - diag(N, I)|| / ||E||`
    pub e_form: f64,
    /// `||Q H P^{-1} - diag(I, A)|| / ||H||`
    pub h_form: f64,
    /// `||E - Q^{-1} diag(N, I) P|| / ||E||` and likewise for `H`.
    pub reconstruction: f64,
    /// `||N^{max rho}||`
    pub nilpotency: f64,
    /// Condition number of `[W V]`, the direct-sum evidence.
    pub split_condition: f64,
}

/// `Q E P^{-1} = diag(N, I)` and `Q H P^{-1} = diag(I, A)`.
#[derive(Clone, Debug)]
pub struct PencilDecomposition {
    pub q: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub nilpotent: DMatrix<f64>,
    pub indices: Vec<usize>,
    pub n_slow: usize,
    pub n_fast: usize,
    pub residuals: Residuals,
}

fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut m = DMatrix::zeros(ra + rb, ca + cb);
    m.view_mut((0, 0), (ra, ca)).copy_from(a);
    m.view_mut((ra, ca), (rb, cb)).copy_from(b);
    m
}

fn rel(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// Quasi-Weierstrass form from the limits `V*`, `W*` of the Wong sequences.
pub fn quasi_weierstrass(p: &LinearPencil, seed: u64) -> Result<PencilDecomposition> {
    p.require_square()?;
    if !is_regular(p, seed)? {
        return Err(Error::Assumption("pencil is not regular".into()));
    }
    let n = p.n();
    let v = wong_v(p)?.pop().unwrap();
    let w = wong_w(p)?.pop().unwrap();
    let (ns, nf) = (v.dim(), w.dim());
    if ns + nf != n {
        return Err(Error::Assumption(format!("dim V* + dim W* = {ns} + {nf} != {n}")));
    }
    let t = DMatrix::from_fn(n, n, |i, j| if j < nf { w.basis()[(i, j)] } else { v.basis()[(i, j - nf)] });
    let split_condition = condition_number(&t);
    if numerical_rank(&t, None)?.rank < n {
        return Err(Error::Assumption(format!("V* and W* do not form a direct sum (condition {split_condition:.3e})")));
    }
    let hw = &p.h * w.basis();
    let ev = &p.e * v.basis();
    let s_inv = DMatrix::from_fn(n, n, |i, j| if j < nf { hw[(i, j)] } else { ev[(i, j - nf)] });
    let q = s_inv.clone().try_inverse().ok_or_else(|| Error::Assumption("[HW EV] is singular".into()))?;
    let p_inv = t.clone();
    let pm = t.try_inverse().ok_or_else(|| Error::Assumption("[W V] is singular".into()))?;
    let et = &q * &p.e * &p_inv;
    let ht = &q * &p.h * &p_inv;
    let nil = et.view((0, 0), (nf, nf)).into_owned();
    let a = ht.view((nf, nf), (ns, ns)).into_owned();
    let e_model = block_diag(&nil, &DMatrix::identity(ns, ns));
    let h_model = block_diag(&DMatrix::identity(nf, nf), &a);
    let (ne, nh) = (p.e.norm().max(f64::MIN_POSITIVE), p.h.norm().max(f64::MIN_POSITIVE));
    let e_form = rel((&et - &e_model).norm(), ne);
    let h_form = rel((&ht - &h_model).norm(), nh);
    let e_back = &s_inv * &e_model * &pm;
    let h_back = &s_inv * &h_model * &pm;
    let reconstruction = rel((&e_back - &p.e).norm(), ne).max(rel((&h_back - &p.h).norm(), nh));
    let indices = if nf == 0 { Vec::new() } else { nilpotency_indices(&nil, 1e-8)? };
    let top = indices.iter().copied().max().unwrap_or(0);
    let nilpotency = if nf == 0 { 0.0 } else { spectral_norm(&nil.pow(top as u32)) };
    Ok(PencilDecomposition {
        q,
        p: pm,
        a,
        nilpotent: nil,
        indices,
        n_slow: ns,
        n_fast: nf,
        residuals: Residuals { e_form, h_form, reconstruction, nilpotency, split_condition },
    })
}
