#![allow(dead_code)]

use std::path::PathBuf;

use daegeo::{DaeModel, Expr};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> DaeModel {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples").join(name);
    DaeModel::load(p).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))
}

/// Random matrix with singular values in `[1, sqrt(cond)]`.
pub fn well_conditioned(n: usize, cond: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let q1 = gaussian(n, rng).qr().q();
    let q2 = gaussian(n, rng).qr().q();
    let top = cond.sqrt();
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |_, _| rng.gen_range(1.0..top)));
    q1 * d * q2
}

/// Nilpotent shift blocks of the given sizes, laid out on the diagonal.
pub fn shift_blocks(sizes: &[usize]) -> DMatrix<f64> {
    let n: usize = sizes.iter().sum();
    let mut m = DMatrix::zeros(n, n);
    let mut off = 0;
    for &s in sizes {
        for i in 0..s.saturating_sub(1) {
            m[(off + i, off + i + 1)] = 1.0;
        }
        off += s;
    }
    m
}

pub struct Weierstrass {
    pub e: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub slow: usize,
    /// Sorted ascending.
    pub blocks: Vec<usize>,
}

/// `S diag(I, N) T x' = S diag(A, I) T x` with random slow part `A` and
/// random block sizes; `S` and `T` each have condition below `sqrt(cond)`.
pub fn scrambled_weierstrass(rng: &mut ChaCha8Rng, max_n: usize, cond: f64) -> Weierstrass {
    let n = rng.gen_range(1..=max_n);
    let slow = rng.gen_range(0..=n);
    let mut blocks = Vec::new();
    let mut left = n - slow;
    while left > 0 {
        let b = rng.gen_range(1..=left);
        blocks.push(b);
        left -= b;
    }
    blocks.sort_unstable();
    let mut e0 = DMatrix::zeros(n, n);
    let mut h0 = DMatrix::zeros(n, n);
    let a = DMatrix::from_fn(slow, slow, |_, _| rng.gen_range(-1.0..1.0));
    e0.view_mut((0, 0), (slow, slow)).fill_with_identity();
    h0.view_mut((0, 0), (slow, slow)).copy_from(&a);
    e0.view_mut((slow, slow), (n - slow, n - slow)).copy_from(&shift_blocks(&blocks));
    h0.view_mut((slow, slow), (n - slow, n - slow)).fill_with_identity();
    let s = well_conditioned(n, cond.sqrt(), rng);
    let t = well_conditioned(n, cond.sqrt(), rng);
    Weierstrass { e: &s * e0 * &t, h: &s * h0 * &t, slow, blocks }
}

/// Linear pencils, optionally in the curved coordinates `x = z + c (z_2^2, ..., z_n^2, 0)`
/// so that `E Dphi(z) z' = H phi(z)`; the origin is consistent either way.
pub fn random_model(rng: &mut ChaCha8Rng, nonlinear: bool) -> DaeModel {
    let w = scrambled_weierstrass(rng, 6, 1e2);
    if !nonlinear {
        return DaeModel::linear("random", &w.e, &w.h).unwrap();
    }
    let n = w.e.nrows();
    let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let phi: Vec<Expr> = (0..n)
        .map(|i| if i + 1 < n { Expr::var(i) + Expr::constant(c[i]) * Expr::var(i + 1) * Expr::var(i + 1) } else { Expr::var(i) })
        .collect();
    // Dphi is the identity plus 2 c_i z_(i+1) on the superdiagonal.
    let dphi = |k: usize, j: usize| -> Expr {
        if k == j {
            Expr::constant(1.0)
        } else if j == k + 1 {
            Expr::constant(2.0 * c[k]) * Expr::var(j)
        } else {
            Expr::constant(0.0)
        }
    };
    let states: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    let e = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let mut acc = Expr::constant(0.0);
                    for k in 0..n {
                        if w.e[(i, k)] != 0.0 && (k == j || j == k + 1) {
                            acc = acc + Expr::constant(w.e[(i, k)]) * dphi(k, j);
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect();
    let f = (0..n)
        .map(|i| {
            let mut acc = Expr::constant(0.0);
            for j in 0..n {
                acc = acc + Expr::constant(w.h[(i, j)]) * phi[j].clone();
            }
            acc
        })
        .collect();
    DaeModel::new("random", states, e, f).unwrap()
}
