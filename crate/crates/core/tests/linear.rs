mod common;

use daegeo::linear::{dims, is_regular, nilpotency_indices, quasi_weierstrass, wong_v, wong_w, LinearPencil};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn pencil(e: DMatrix<f64>, h: DMatrix<f64>) -> LinearPencil {
    LinearPencil::new(e, h).unwrap()
}

#[test]
fn scrambled_weierstrass_round_trip() {
    let mut rng = common::rng(2024);
    for case in 0..100 {
        let w = common::scrambled_weierstrass(&mut rng, 8, 1e3);
        let d = quasi_weierstrass(&pencil(w.e.clone(), w.h.clone()), 0).unwrap_or_else(|e| panic!("case {case}: {e}"));
        assert_eq!(d.indices, w.blocks, "case {case}");
        assert_eq!(d.n_slow, w.slow, "case {case}");
        assert!(d.residuals.reconstruction <= 1e-7, "case {case}: {:?}", d.residuals);
        assert!(d.residuals.nilpotency <= 1e-8, "case {case}: {:?}", d.residuals);
    }
}

#[test]
fn bundled_fixture_has_blocks_two_two_three() {
    let m = common::fixture("wf_scrambled.dae");
    let (e, h) = m.pencil().unwrap();
    let d = quasi_weierstrass(&pencil(e, h), 0).unwrap();
    assert_eq!(d.indices, vec![2, 2, 3]);
    assert_eq!(d.n_slow, 1);
    assert!((d.a[(0, 0)] + 1.0).abs() < 1e-9);
}

#[test]
fn wong_limits_split_the_space() {
    let mut rng = common::rng(5);
    for _ in 0..30 {
        let w = common::scrambled_weierstrass(&mut rng, 8, 1e3);
        let p = pencil(w.e, w.h);
        let v = dims(&wong_v(&p).unwrap());
        let ww = dims(&wong_w(&p).unwrap());
        assert_eq!(*v.last().unwrap(), w.slow);
        assert_eq!(*ww.last().unwrap(), w.blocks.iter().sum::<usize>());
        // chain lengths: the longest block sets how long both sequences take
        let longest = w.blocks.iter().copied().max().unwrap_or(0);
        assert_eq!(v.len(), longest + 2);
        assert_eq!(ww.len(), longest.max(1) + 1);
    }
}

#[test]
fn singular_pencils_are_detected() {
    let e = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    let p = pencil(e, h);
    assert!(!is_regular(&p, 0).unwrap());
    assert!(quasi_weierstrass(&p, 0).is_err());
}

#[test]
fn rectangular_pencils_are_not_decomposed() {
    let p = pencil(DMatrix::zeros(2, 3), DMatrix::zeros(2, 3));
    assert!(quasi_weierstrass(&p, 0).is_err());
    assert_eq!(dims(&wong_v(&p).unwrap())[0], 3);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn nilpotency_indices_survive_similarity(blocks in proptest::collection::vec(1usize..4, 1..4), seed in 0u64..10_000) {
        let mut sorted = blocks.clone();
        sorted.sort_unstable();
        let n0 = common::shift_blocks(&blocks);
        let mut rng = common::rng(seed);
        let s = common::well_conditioned(n0.nrows(), 30.0, &mut rng);
        let sinv = s.clone().try_inverse().unwrap();
        let n = &s * n0 * sinv;
        prop_assert_eq!(nilpotency_indices(&n, 1e-8).unwrap(), sorted);
    }

    #[test]
    fn wong_w_is_increasing_and_wong_v_decreasing(seed in 0u64..10_000) {
        let mut rng = common::rng(seed);
        let w = common::scrambled_weierstrass(&mut rng, 7, 1e2);
        let p = pencil(w.e, w.h);
        let v = dims(&wong_v(&p).unwrap());
        let ww = dims(&wong_w(&p).unwrap());
        prop_assert!(v.windows(2).all(|x| x[0] >= x[1]));
        prop_assert!(ww.windows(2).all(|x| x[0] <= x[1]));
        prop_assert_eq!(v[v.len() - 1], v[v.len() - 2]);
        prop_assert_eq!(ww[ww.len() - 1], ww[ww.len() - 2]);
    }
}
