use daegeo::numlin::{
    from_dmatrix, image, lstsq, nullspace, numerical_rank, preimage, subspace_intersect, subspace_sum, svd, FrozenPivots, Subspace,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// `rows x cols` integer product with rank at most `k`.
fn low_rank() -> impl Strategy<Value = (DMatrix<f64>, usize)> {
    (1..8usize, 1..8usize).prop_flat_map(|(r, c)| {
        (0..=r.min(c)).prop_flat_map(move |k| {
            (proptest::collection::vec(-3i32..4, r * k), proptest::collection::vec(-3i32..4, k * c)).prop_map(move |(a, b)| {
                let a = DMatrix::from_iterator(r, k, a.into_iter().map(f64::from));
                let b = DMatrix::from_iterator(k, c, b.into_iter().map(f64::from));
                (a * b, k)
            })
        })
    })
}

fn subspace_pair() -> impl Strategy<Value = (Subspace, Subspace)> {
    (1..7usize).prop_flat_map(|n| {
        let gen = move || (0..=n).prop_flat_map(move |k| proptest::collection::vec(-2i32..3, n * k).prop_map(move |v| DMatrix::from_iterator(n, k, v.into_iter().map(f64::from))));
        (gen(), gen()).prop_map(|(a, b)| (Subspace::span(&a), Subspace::span(&b)))
    })
}

fn orthonormal(s: &Subspace) -> bool {
    let b = s.basis();
    (b.transpose() * b - DMatrix::identity(s.dim(), s.dim())).amax() <= 1e-12
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn svd_recomposes((a, _) in low_rank()) {
        let d = svd(&a).unwrap();
        let mut sig = DMatrix::zeros(a.nrows(), a.ncols());
        for i in 0..d.s.len() {
            sig[(i, i)] = d.s[i];
        }
        prop_assert!((&d.u * sig * d.v.transpose() - &a).norm() <= 1e-12 * a.norm().max(1.0));
        prop_assert!(d.s.as_slice().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn rank_never_exceeds_inner_dimension((a, k) in low_rank()) {
        prop_assert!(numerical_rank(&a, None).unwrap().rank <= k);
    }

    #[test]
    fn nullspace_is_annihilated_and_complements_rank((a, _) in low_rank()) {
        let ns = nullspace(&a);
        let r = numerical_rank(&a, None).unwrap().rank;
        prop_assert_eq!(ns.dim() + r, a.ncols());
        prop_assert!(orthonormal(&ns));
        prop_assert!((&a * ns.basis()).amax() <= 1e-10 * a.amax().max(1.0));
    }

    #[test]
    fn frozen_kernel_and_annihilator_vanish((a, _) in low_rank()) {
        let p = FrozenPivots::at(&a, None, 1e8).unwrap();
        let m = from_dmatrix(&a);
        let k = p.kernel(&m).unwrap().re();
        let l = p.annihilator(&m).unwrap().re();
        prop_assert_eq!(k.ncols(), a.ncols() - p.rank());
        prop_assert_eq!(l.nrows(), a.nrows() - p.rank());
        let scale = a.amax().max(1.0);
        prop_assert!((&a * &k).amax() <= 1e-10 * scale);
        prop_assert!((&l * &a).amax() <= 1e-10 * scale);
        prop_assert_eq!(numerical_rank(&k, None).unwrap().rank, k.ncols());
    }

    #[test]
    fn grassmann_dimension_formula((a, b) in subspace_pair()) {
        let s = subspace_sum(&a, &b).unwrap();
        let i = subspace_intersect(&a, &b).unwrap();
        prop_assert_eq!(s.dim() + i.dim(), a.dim() + b.dim());
        prop_assert!(s.contains(&a) && s.contains(&b));
        prop_assert!(a.contains(&i) && b.contains(&i));
        prop_assert!(orthonormal(&s) && orthonormal(&i));
    }

    #[test]
    fn image_of_preimage_stays_inside((m, _) in low_rank(), seed in 0u64..1000) {
        let n = m.nrows();
        let k = (seed as usize) % (n + 1);
        let s = Subspace::span(&DMatrix::from_fn(n, k, |i, j| (((i + 3 * j) as u64 * 7 + seed) % 5) as f64 - 2.0));
        let pre = preimage(&m, &s).unwrap();
        let back = image(&m, &pre).unwrap();
        prop_assert!(s.contains(&back));
    }

    #[test]
    fn lstsq_solves_consistent_systems((a, _) in low_rank(), x in proptest::collection::vec(-2.0..2.0f64, 8)) {
        let x = DVector::from_iterator(a.ncols(), x.into_iter().take(a.ncols()));
        let b = &a * &x;
        let (sol, res, _) = lstsq(&a, &b, None);
        prop_assert!(res <= 1e-9 * b.norm().max(1.0));
        prop_assert!(sol.norm() <= x.norm() + 1e-9);
    }
}

#[test]
fn round_off_matrix_has_rank_zero() {
    let a = DMatrix::from_row_slice(2, 2, &[2.5e-18, 0.0, 0.0, 0.0]);
    assert_eq!(numerical_rank(&a, None).unwrap().rank, 0);
}

#[test]
fn custom_tolerance_changes_the_cut() {
    let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-6]));
    assert_eq!(numerical_rank(&a, None).unwrap().rank, 2);
    assert_eq!(numerical_rank(&a, Some(1e-4)).unwrap().rank, 1);
}
