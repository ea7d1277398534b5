use daegeo::expr::{jet_bracket, parse_expression, BinOp, Func, Jet};
use daegeo::{Dual64, Expr};
use proptest::prelude::*;

const N: usize = 3;

fn names() -> Vec<String> {
    (1..=N).map(|i| format!("x{i}")).collect()
}

/// Expressions that stay finite and smooth on the box `[-1, 1]^3`.
fn smooth_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0..N).prop_map(Expr::var),
        (-3.0..3.0f64).prop_map(|c| Expr::constant((c * 4.0).round() / 4.0)),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a + b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a - b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a * b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a / (Expr::constant(2.0) + b.clone() * b)),
            inner.clone().prop_map(|a| Expr::func(Func::Sin, a)),
            inner.clone().prop_map(|a| Expr::func(Func::Cos, a)),
            inner.clone().prop_map(|a| Expr::func(Func::Exp, Expr::func(Func::Sin, a))),
            inner.clone().prop_map(|a| Expr::func(Func::Ln, Expr::constant(1.0) + a.clone() * a)),
            inner.clone().prop_map(|a| Expr::func(Func::Sqrt, Expr::constant(1.0) + a.clone() * a)),
            (inner.clone(), 0..4i32).prop_map(|(a, k)| a.pow(Expr::constant(k as f64))),
            inner.prop_map(|a| -a),
        ]
    })
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1.0..1.0f64, N)
}

fn value(e: &Expr, x: &[f64]) -> f64 {
    e.eval::<f64>(x).unwrap()
}

fn dual_gradient(e: &Expr, x: &[f64]) -> Vec<f64> {
    let xs: Vec<Dual64> = (0..N).map(|i| Dual64::variable(x[i], i, N)).collect();
    let d = e.eval(&xs).unwrap();
    (0..N).map(|i| d.partial(i)).collect()
}

/// Fourth-order central differences.
fn fd_gradient(e: &Expr, x: &[f64]) -> Vec<f64> {
    let h = 1e-3;
    (0..N)
        .map(|i| {
            let at = |s: f64| {
                let mut y = x.to_vec();
                y[i] += s * h;
                value(e, &y)
            };
            (-at(2.0) + 8.0 * at(1.0) - 8.0 * at(-1.0) + at(-2.0)) / (12.0 * h)
        })
        .collect()
}

fn poly_field() -> impl Strategy<Value = Vec<Expr>> {
    let term = (0..N, 0..N, -2.0..2.0f64).prop_map(|(i, j, c)| Expr::constant((c * 8.0).round() / 8.0) * Expr::var(i) * Expr::var(j));
    let comp = (term.clone(), term, -1.0..1.0f64, 0..N).prop_map(|(a, b, c, k)| a + b + Expr::constant(c) * Expr::func(Func::Sin, Expr::var(k)));
    proptest::collection::vec(comp, N)
}

fn expand(f: &[Expr], x: &[f64], order: usize) -> Vec<Jet> {
    let xs = Jet::seed(x, order);
    f.iter().map(|e| e.eval(&xs).unwrap()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, ..ProptestConfig::default() })]

    #[test]
    fn dual_gradient_matches_finite_differences(e in smooth_expr(), x in point()) {
        let g = dual_gradient(&e, &x);
        let fd = fd_gradient(&e, &x);
        for i in 0..N {
            let scale = g[i].abs().max(1.0);
            prop_assert!((g[i] - fd[i]).abs() <= 1e-6 * scale, "component {i}: dual {} vs fd {}", g[i], fd[i]);
        }
    }

    #[test]
    fn jet_gradient_matches_dual(e in smooth_expr(), x in point()) {
        let xs = Jet::seed(&x, 2);
        let j = e.eval(&xs).unwrap();
        let g = dual_gradient(&e, &x);
        prop_assert!((j.value() - value(&e, &x)).abs() <= 1e-12 * value(&e, &x).abs().max(1.0));
        for (a, b) in j.gradient(N).iter().zip(&g) {
            prop_assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
        }
    }

    #[test]
    fn printed_expressions_parse_back(e in smooth_expr(), x in point()) {
        let s = names();
        let text = e.to_text(&s);
        let back = parse_expression(&text, &s).unwrap();
        let (a, b) = (value(&e, &x), value(&back, &x));
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{text}");
    }

    #[test]
    fn bracket_satisfies_jacobi_identity(a in poly_field(), b in poly_field(), c in poly_field(), x in point()) {
        let (ja, jb, jc) = (expand(&a, &x, 2), expand(&b, &x, 2), expand(&c, &x, 2));
        let t1 = jet_bracket(&ja, &jet_bracket(&jb, &jc));
        let t2 = jet_bracket(&jb, &jet_bracket(&jc, &ja));
        let t3 = jet_bracket(&jc, &jet_bracket(&ja, &jb));
        for i in 0..N {
            let s = t1[i].value() + t2[i].value() + t3[i].value();
            prop_assert!(s.abs() <= 1e-10, "component {i}: {s}");
        }
    }

    #[test]
    fn bracket_is_bilinear_and_antisymmetric(a in poly_field(), b in poly_field(), c in poly_field(), x in point(), s in -2.0..2.0f64) {
        let (ja, jb, jc) = (expand(&a, &x, 1), expand(&b, &x, 1), expand(&c, &x, 1));
        let comb: Vec<Jet> = ja.iter().zip(&jc).map(|(p, q)| p.clone() * Jet::constant(s) + q.clone()).collect();
        let lhs = jet_bracket(&comb, &jb);
        let ab = jet_bracket(&ja, &jb);
        let cb = jet_bracket(&jc, &jb);
        let ba = jet_bracket(&jb, &ja);
        for i in 0..N {
            let rhs = s * ab[i].value() + cb[i].value();
            prop_assert!((lhs[i].value() - rhs).abs() <= 1e-10 * rhs.abs().max(1.0));
            prop_assert!((ab[i].value() + ba[i].value()).abs() <= 1e-12);
        }
    }
}

#[test]
fn second_order_coefficients_match_hand_derivatives() {
    let s = names();
    let e = parse_expression("x1^2*sin(x2) + exp(x3)", &s).unwrap();
    let x = [0.5, 0.3, -0.2];
    let j = e.eval(&Jet::seed(&x, 2)).unwrap();
    // Taylor coefficient of h1*h2 is the mixed partial 2 x1 cos(x2).
    assert!((j.coefficient(&[1, 1, 0]) - 2.0 * 0.5 * 0.3f64.cos()).abs() < 1e-14);
    // Coefficient of h3^2 is exp(x3) / 2.
    assert!((j.coefficient(&[0, 0, 2]) - (-0.2f64).exp() / 2.0).abs() < 1e-14);
}

#[test]
fn operators_build_binary_nodes() {
    let e = Expr::var(0) * Expr::var(1);
    assert!(matches!(e, Expr::Bin(BinOp::Mul, _, _)));
}
