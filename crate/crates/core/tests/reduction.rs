mod common;

use common::fixture;
use daegeo::reduction::{run_reduction, ReductionTrace};
use daegeo::{AnalysisConfig, DaeModel};
use nalgebra::DMatrix;

fn check_invariants(t: &ReductionTrace, n: usize, l: usize) {
    assert!(t.k_star <= n, "k* = {} > n = {n}", t.k_star);
    let mut prev = n;
    for s in &t.steps {
        assert!(s.n_k <= prev, "n_k grew: {:?}", t.steps);
        assert!(s.r_k <= prev.min(l), "r_k = {} exceeds min(n_(k-1), l)", s.r_k);
        assert_eq!(prev - s.n_k, s.new_constraints);
        assert!(s.rank_evidence.min_rank == s.rank_evidence.max_rank);
        prev = s.n_k;
    }
    if t.consistent {
        let n_star = t.n_star.unwrap();
        let r_star = t.r_star.unwrap();
        assert!(r_star <= n_star);
        assert_eq!(t.internally_regular, n_star == r_star);
        assert_eq!(t.n_chain().len(), t.k_star);
    }
}

#[test]
fn xi66_regular_point_chains() {
    let m = fixture("xi66_regular.dae");
    let red = run_reduction(&m, &m.point().unwrap(), &AnalysisConfig::default()).unwrap();
    let t = &red.trace;
    assert_eq!(t.r_chain(), vec![4, 2, 1]);
    assert_eq!(t.n_chain(), vec![4, 2, 1]);
    assert_eq!(t.k_star, 3);
    assert_eq!((t.n_star, t.r_star), (Some(1), Some(1)));
    assert!(t.consistent && t.internally_regular);
}

#[test]
fn xi66_base_point_is_singular() {
    let m = fixture("xi66.dae");
    let err = run_reduction(&m, &m.point().unwrap(), &AnalysisConfig::default()).err().unwrap();
    match err {
        daegeo::Error::RankNotConstant { base, found, witness, .. } => {
            assert_eq!((base, found), (3, 4));
            assert_eq!(witness.len(), 6);
        }
        other => panic!("expected a rank witness, got {other}"),
    }
}

#[test]
fn xi66_manifold_is_the_exponential_curve() {
    let m = fixture("xi66_regular.dae");
    let cfg = AnalysisConfig::default();
    let red = run_reduction(&m, &m.point().unwrap(), &cfg).unwrap();
    let star = red.chart(red.trace.k_star).unwrap();
    // M* = {x1 = x3 = x4 = x5 = 0, x2 = x6}
    for s in star.sample(&m.point().unwrap(), 20, 0.05, &mut cfg.rng(), &cfg).unwrap() {
        for i in [0, 2, 3, 4] {
            assert!(s[i].abs() < 1e-9, "{s:?}");
        }
        assert!((s[1] - s[5]).abs() < 1e-9);
    }
    for t in [0.4, 0.5, 0.6] {
        assert!(star.constraints(&[0.0, t, 0.0, 0.0, 0.0, t]).unwrap().0.amax() < 1e-12);
    }
}

#[test]
fn obs1_manifold_and_velocity() {
    let cfg = AnalysisConfig::default();
    for f in ["obs1_a.dae", "obs1_b.dae"] {
        let m = fixture(f);
        let red = run_reduction(&m, &m.point().unwrap(), &cfg).unwrap();
        assert_eq!(red.trace.k_star, 1);
        assert_eq!(red.trace.n_star, Some(1));
        assert!(red.trace.internally_regular);
        let star = red.chart(1).unwrap();
        for s in star.sample(&m.point().unwrap(), 20, 0.1, &mut cfg.rng(), &cfg).unwrap() {
            assert!(s[0].abs() < 1e-8 && s[1].abs() < 1e-8, "{s:?}");
        }
        let v = red.reduced.unwrap().admissible_velocity(&[0.0, 0.0, 0.3]).unwrap();
        assert!((v.particular[2] - 0.09).abs() < 1e-12);
        assert!(v.is_unique());
    }
}

#[test]
fn inconsistent_point_is_reported() {
    let m = fixture("obs1_a.dae");
    let red = run_reduction(&m, &[1.0, 0.0, 0.0], &AnalysisConfig::default()).unwrap();
    assert!(!red.trace.consistent);
    assert!(red.reduced.is_none());
    assert_eq!(red.trace.n_star, None);
}

#[test]
fn scalar_xi11_is_an_ode() {
    let m = fixture("xi11.dae");
    let red = run_reduction(&m, &[1.0], &AnalysisConfig::default()).unwrap();
    assert_eq!(red.trace.k_star, 0);
    assert!(red.trace.internally_regular);
    let v = red.reduced.unwrap().admissible_velocity(&[2.0]).unwrap();
    assert!((v.particular[0] - 2.0).abs() < 1e-12);
}

#[test]
fn identity_e_needs_no_reduction() {
    let n = 4;
    let h = DMatrix::from_fn(n, n, |i, j| ((i * 3 + j) % 5) as f64 - 2.0);
    let m = DaeModel::linear("ode", &DMatrix::identity(n, n), &h).unwrap();
    let red = run_reduction(&m, &[0.1, 0.2, 0.3, 0.4], &AnalysisConfig::default()).unwrap();
    assert_eq!(red.trace.k_star, 0);
    assert_eq!(red.trace.n_star, Some(n));
}

#[test]
fn not_internally_regular_model_has_free_directions() {
    let m = fixture("nonholonomic.dae");
    let red = run_reduction(&m, &m.point().unwrap(), &AnalysisConfig::default()).unwrap();
    let t = &red.trace;
    assert!(t.consistent && !t.internally_regular);
    assert_eq!((t.n_star, t.r_star), (Some(2), Some(1)));
    assert_eq!(red.reduced.unwrap().free_dim(), 1);
}

#[test]
fn bundled_models_satisfy_chain_invariants() {
    let cfg = AnalysisConfig::default();
    for f in ["xi66_regular.dae", "xi11.dae", "obs1_a.dae", "obs1_b.dae", "nonholonomic.dae", "semi_explicit.dae", "chain3.dae", "wf_scrambled.dae"] {
        let m = fixture(f);
        let x = m.point().unwrap_or_else(|_| vec![0.0; m.n()]);
        let red = run_reduction(&m, &x, &cfg).unwrap();
        check_invariants(&red.trace, m.n(), m.l());
    }
}

#[test]
fn random_models_satisfy_chain_invariants() {
    let cfg = AnalysisConfig::default();
    let mut rng = common::rng(42);
    for i in 0..50 {
        let m = common::random_model(&mut rng, i % 2 == 1);
        let red = run_reduction(&m, &vec![0.0; m.n()], &cfg).unwrap_or_else(|e| panic!("model {i}: {e}"));
        check_invariants(&red.trace, m.n(), m.l());
        assert!(red.trace.consistent);
        let (e, h) = (m.e_at(&vec![0.0; m.n()]).unwrap(), linearize(&m));
        let p = daegeo::linear::LinearPencil::new(e, h).unwrap();
        let v = daegeo::linear::dims(&daegeo::linear::wong_v(&p).unwrap());
        assert_eq!(red.trace.n_chain(), v[1..v.len() - 1].to_vec(), "model {i}");
    }
}

fn linearize(m: &DaeModel) -> DMatrix<f64> {
    daegeo::model::linearize_at(m, &vec![0.0; m.n()]).unwrap().1
}

#[test]
fn reduction_is_deterministic() {
    let m = fixture("xi66_regular.dae");
    let cfg = AnalysisConfig { seed: 9, ..AnalysisConfig::default() };
    let a = run_reduction(&m, &m.point().unwrap(), &cfg).unwrap();
    let b = run_reduction(&m, &m.point().unwrap(), &cfg).unwrap();
    assert_eq!(serde_json::to_string(&a.trace).unwrap(), serde_json::to_string(&b.trace).unwrap());
}
