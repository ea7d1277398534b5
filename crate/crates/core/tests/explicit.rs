mod common;

use std::sync::Arc;

use common::fixture;
use daegeo::explicit::{
    apply_feedback, check_membership, check_solution_correspondence, explicitate, involutivity_verdict, semi_explicit_verdict, summarize,
    ControlSystem, FeedbackTransform,
};
use daegeo::expr::{parse_expression, ConstMap, ExprMap, VectorField};
use daegeo::numlin::numerical_rank;
use daegeo::reduction::run_reduction;
use daegeo::AnalysisConfig;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn field(exprs: &[&str], n: usize) -> VectorField {
    let names: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    let ex = exprs.iter().map(|s| parse_expression(s, &names).unwrap()).collect();
    Arc::new(ExprMap::new(n, ex).unwrap())
}

#[test]
fn explicitation_dimensions_add_up() {
    let cfg = AnalysisConfig::default();
    for f in ["xi66_regular.dae", "xi11.dae", "obs1_a.dae", "obs1_b.dae", "nonholonomic.dae", "semi_explicit.dae", "chain3.dae"] {
        let m = fixture(f);
        let x = m.point().unwrap_or_else(|_| vec![0.0; m.n()]);
        let cs = explicitate(&m, &x, &cfg).unwrap();
        let rank_e = numerical_rank(&m.e_at(&x).unwrap(), None).unwrap().rank;
        assert_eq!(cs.m + rank_e, m.n(), "{f}");
        assert_eq!(cs.p + rank_e, m.l(), "{f}");
    }
}

#[test]
fn xi66_outputs_vanish_on_their_zero_set() {
    let cfg = AnalysisConfig::default();
    let m = fixture("xi66_regular.dae");
    let xp = m.point().unwrap();
    let cs = explicitate(&m, &xp, &cfg).unwrap();
    assert_eq!((cs.m, cs.p), (2, 2));
    // h = 0 exactly where x1/x6 = 0 and x3 + x5 = 0
    for (x, zero) in [([0.0, 0.3, 0.2, 0.1, -0.2, 0.6], true), ([0.1, 0.3, 0.2, 0.1, -0.2, 0.6], false), ([0.0, 0.3, 0.2, 0.1, 0.2, 0.6], false)] {
        assert_eq!(cs.h_at(&x).unwrap().amax() < 1e-12, zero, "{x:?}");
    }
    let s = summarize(&cs, &xp, &cfg).unwrap();
    assert_eq!((s.q, s.m, s.p, s.h_zero_set_dim), (4, 2, 2, 4));
}

#[test]
fn obs1_kernel_involutivity() {
    let cfg = AnalysisConfig::default();
    let a = fixture("obs1_a.dae");
    let b = fixture("obs1_b.dae");
    let xa = explicitate(&a, &a.point().unwrap(), &cfg).unwrap();
    let xb = explicitate(&b, &b.point().unwrap(), &cfg).unwrap();
    assert!(involutivity_verdict(&xa.inputs(), &a.point().unwrap(), &cfg).unwrap().involutive);
    let vb = involutivity_verdict(&xb.inputs(), &b.point().unwrap(), &cfg).unwrap();
    assert!(!vb.involutive);
    assert!(vb.worst_residual > 1e-3);
}

#[test]
fn constant_fields_are_involutive() {
    let cfg = AnalysisConfig::default();
    let fs: Vec<VectorField> = vec![Arc::new(ConstMap { n: 3, value: vec![1.0, 0.0, 2.0] }), Arc::new(ConstMap { n: 3, value: vec![0.0, 1.0, 0.0] })];
    let v = involutivity_verdict(&fs, &[0.3, 0.1, 0.2], &cfg).unwrap();
    assert!(v.involutive);
    assert_eq!(v.worst_residual, 0.0);
}

#[test]
fn rolling_fields_bracket_leaves_the_span() {
    let cfg = AnalysisConfig::default();
    let g1 = field(&["cos(x3)", "sin(x3)", "0"], 3);
    let g2 = field(&["0", "0", "1"], 3);
    let v = involutivity_verdict(&[g1.clone(), g2.clone()], &[0.2, -0.1, 0.7], &cfg).unwrap();
    assert!(!v.involutive);
    // [g1, g2] = (sin x3, -cos x3, 0) is a unit vector orthogonal to both fields
    let b = daegeo::expr::lie_bracket(g1.as_ref(), g2.as_ref(), &[0.2, -0.1, 0.7]).unwrap();
    assert!((b[0] - 0.7f64.sin()).abs() < 1e-14 && (b[1] + 0.7f64.cos()).abs() < 1e-14);
}

#[test]
fn involutivity_is_invariant_under_constant_recombination() {
    let cfg = AnalysisConfig::default();
    let mut rng = common::rng(3);
    for f in ["obs1_a.dae", "obs1_b.dae", "nonholonomic.dae"] {
        let m = fixture(f);
        let xp = m.point().unwrap();
        let cs = explicitate(&m, &xp, &cfg).unwrap();
        let base = involutivity_verdict(&cs.inputs(), &xp, &cfg).unwrap().involutive;
        for _ in 0..5 {
            let beta = common::well_conditioned(cs.m, 10.0, &mut rng);
            let t = FeedbackTransform::constant(cs.n, &DVector::zeros(cs.m), &beta, &DMatrix::zeros(cs.n, cs.p), &DMatrix::identity(cs.p, cs.p));
            let moved = apply_feedback(&cs, &t, &xp).unwrap();
            assert_eq!(involutivity_verdict(&moved.inputs(), &xp, &cfg).unwrap().involutive, base, "{f}");
        }
    }
}

#[test]
fn semi_explicit_verdicts() {
    let cfg = AnalysisConfig::default();
    let verdict = |f: &str| {
        let m = fixture(f);
        semi_explicit_verdict(&m, &m.point().unwrap_or_else(|_| vec![0.0; m.n()]), &cfg).unwrap()
    };
    assert!(verdict("obs1_a.dae").semi_explicit);
    assert!(!verdict("obs1_b.dae").semi_explicit);
    assert!(verdict("semi_explicit.dae").semi_explicit);
    assert!(verdict("chain3.dae").semi_explicit);
    assert!(!verdict("nonholonomic.dae").semi_explicit);
    let singular = verdict("xi66.dae");
    assert!(!singular.rank_constant && !singular.semi_explicit);
}

#[test]
fn feedback_transforms_stay_in_the_class() {
    let mut cfg = AnalysisConfig::default();
    cfg.samples = 8;
    let mut rng = common::rng(77);
    let models = ["xi66_regular.dae", "obs1_a.dae", "obs1_b.dae", "nonholonomic.dae", "semi_explicit.dae"];
    for k in 0..50 {
        let m = fixture(models[k % models.len()]);
        let xp = m.point().unwrap();
        let cs = explicitate(&m, &xp, &cfg).unwrap();
        let (n, mm, p) = (cs.n, cs.m, cs.p);
        let alpha = DVector::from_fn(mm, |_, _| rng.gen_range(-1.0..1.0));
        let beta = common::well_conditioned(mm, 20.0, &mut rng);
        let gamma = DMatrix::from_fn(n, p, |_, _| rng.gen_range(-1.0..1.0));
        let eta = common::well_conditioned(p, 20.0, &mut rng);
        let t = FeedbackTransform::constant(n, &alpha, &beta, &gamma, &eta);
        let moved = apply_feedback(&cs, &t, &xp).unwrap();
        let r = check_membership(&m, &moved, &cs, &xp, &cfg).unwrap();
        assert!(r.passed, "transform {k} on {}: {r:?}", m.name);
    }
}

#[test]
fn a_foreign_control_system_fails_membership() {
    let cfg = AnalysisConfig::default();
    let m = fixture("obs1_a.dae");
    let xp = m.point().unwrap();
    let cs = explicitate(&m, &xp, &cfg).unwrap();
    let names: Vec<String> = (1..=3).map(|i| format!("x{i}")).collect();
    let p = |s: &str| parse_expression(s, &names).unwrap();
    let foreign = ControlSystem::from_exprs(3, vec![p("0"), p("0"), p("x3")], vec![vec![p("1"), p("0"), p("0")], vec![p("0"), p("0"), p("1")]], vec![p("x1"), p("x2")]).unwrap();
    assert!(!check_membership(&m, &foreign, &cs, &xp, &cfg).unwrap().passed);
}

#[test]
fn solutions_correspond() {
    let cfg = AnalysisConfig::default();
    for (f, x0) in [("xi66_regular.dae", vec![0.0, 0.5, 0.0, 0.0, 0.0, 0.5]), ("xi11.dae", vec![1.0]), ("obs1_b.dae", vec![0.0, 0.0, 0.5])] {
        let m = fixture(f);
        let xp = m.point().unwrap();
        let red = run_reduction(&m, &xp, &cfg).unwrap();
        let cs = explicitate(&m, &xp, &cfg).unwrap();
        let c = check_solution_correspondence(red.reduced.as_ref().unwrap(), &cs, &x0, 1.0, 1e-3).unwrap();
        assert!(c.passed, "{f}: {c:?}");
    }
}

#[test]
fn bad_feedback_shapes_are_rejected() {
    let cfg = AnalysisConfig::default();
    let m = fixture("obs1_a.dae");
    let xp = m.point().unwrap();
    let cs = explicitate(&m, &xp, &cfg).unwrap();
    let t = FeedbackTransform::identity(3, cs.m + 1, cs.p);
    assert!(apply_feedback(&cs, &t, &xp).is_err());
    let singular = FeedbackTransform::constant(3, &DVector::zeros(cs.m), &DMatrix::zeros(cs.m, cs.m), &DMatrix::zeros(3, cs.p), &DMatrix::identity(cs.p, cs.p));
    assert!(apply_feedback(&cs, &singular, &xp).is_err());
}
