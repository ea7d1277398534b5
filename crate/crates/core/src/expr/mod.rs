//! Expression DSL, evaluation on any [`Scalar`], and the smooth-map layer.

mod dual;
mod field;
mod jet;
mod parse;

use std::fmt::Write as _;
use std::ops::{Add, Div, Mul, Neg, Sub};

pub use dual::Dual;
pub use field::{
    eval, jacobian, jet_bracket, jet_jacobian, jet_lie_derivative, lie_bracket, lie_derivative, values,
    ConstMap, ExprMap, SmoothMap, VectorField,
};
pub use jet::{Jet, JetSpace};
pub use parse::parse_expression;

use crate::error::DomainKind;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Abs,
}

impl Func {
    pub const ALL: [Func; 7] = [Func::Sin, Func::Cos, Func::Tan, Func::Exp, Func::Ln, Func::Sqrt, Func::Abs];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    pub fn from_name(s: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Expression tree over the state variables `x[0..n]`.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Func(Func, Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn constant(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn func(f: Func, arg: Expr) -> Expr {
        Expr::Func(f, Box::new(arg))
    }

    pub fn pow(self, e: Expr) -> Expr {
        Expr::Bin(BinOp::Pow, Box::new(self), Box::new(e))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(v) if *v == 0.0)
    }

    /// Largest variable index used, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(a) | Expr::Func(_, a) => a.max_var(),
            Expr::Bin(_, a, b) => a.max_var().max(b.max_var()),
        }
    }

    /// Replaces every `Var(i)` by `subs[i]`.
    pub fn substitute(&self, subs: &[Expr]) -> Expr {
        match self {
            Expr::Const(v) => Expr::Const(*v),
            Expr::Var(i) => subs[*i].clone(),
            Expr::Neg(a) => Expr::Neg(Box::new(a.substitute(subs))),
            Expr::Func(f, a) => Expr::Func(*f, Box::new(a.substitute(subs))),
            Expr::Bin(op, a, b) => Expr::Bin(*op, Box::new(a.substitute(subs)), Box::new(b.substitute(subs))),
        }
    }

    /// Integer exponent if `e` is syntactically an integer literal, possibly negated.
    fn integer_exponent(e: &Expr) -> Option<i32> {
        match e {
            Expr::Const(v) if v.fract() == 0.0 && v.abs() <= 64.0 => Some(*v as i32),
            Expr::Neg(a) => Expr::integer_exponent(a).map(|k| -k),
            _ => None,
        }
    }

    pub fn eval<S: Scalar>(&self, x: &[S]) -> Result<S, DomainKind> {
        Ok(match self {
            Expr::Const(v) => S::from_f64(*v),
            Expr::Var(i) => x[*i].clone(),
            Expr::Neg(a) => -a.eval(x)?,
            Expr::Func(f, a) => {
                let v = a.eval(x)?;
                let r = v.re();
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Tan => {
                        if r.cos() == 0.0 {
                            return Err(DomainKind::TanPole);
                        }
                        v.tan()
                    }
                    Func::Exp => v.exp(),
                    Func::Ln => {
                        if r <= 0.0 {
                            return Err(DomainKind::LogNonPositive);
                        }
                        v.ln()
                    }
                    Func::Sqrt => {
                        if r < 0.0 {
                            return Err(DomainKind::SqrtNegative);
                        }
                        v.sqrt()
                    }
                    Func::Abs => v.abs(),
                }
            }
            Expr::Bin(op, a, b) => {
                if let (BinOp::Pow, Some(k)) = (op, Expr::integer_exponent(b)) {
                    let base = a.eval(x)?;
                    if k < 0 && base.re() == 0.0 {
                        return Err(DomainKind::DivisionByZero);
                    }
                    return Ok(base.powi(k));
                }
                let (u, v) = (a.eval(x)?, b.eval(x)?);
                match op {
                    BinOp::Add => u + v,
                    BinOp::Sub => u - v,
                    BinOp::Mul => u * v,
                    BinOp::Div => {
                        if v.re() == 0.0 {
                            return Err(DomainKind::DivisionByZero);
                        }
                        u / v
                    }
                    BinOp::Pow => {
                        if u.re() <= 0.0 {
                            return Err(DomainKind::PowNegativeBase);
                        }
                        u.powf(&v)
                    }
                }
            }
        })
    }

    /// Precedence level of the node as printed: 1 sum, 2 product, 3 unary, 4 power, 5 atom.
    fn level(&self) -> u8 {
        match self {
            Expr::Const(v) if *v < 0.0 || v.is_sign_negative() => 3,
            Expr::Const(_) | Expr::Var(_) | Expr::Func(..) => 5,
            Expr::Neg(_) => 3,
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Bin(BinOp::Pow, ..) => 4,
        }
    }

    /// Renders with the minimal parentheses the grammar needs.
    pub fn to_text(&self, names: &[String]) -> String {
        let mut s = String::new();
        self.write(names, 0, &mut s);
        s
    }

    fn write(&self, names: &[String], min: u8, out: &mut String) {
        let paren = self.level() < min;
        if paren {
            out.push('(');
        }
        match self {
            Expr::Const(v) => out.push_str(&fmt_number(*v)),
            Expr::Var(i) => out.push_str(names.get(*i).map_or("?", |s| s.as_str())),
            Expr::Neg(a) => {
                out.push('-');
                a.write(names, 3, out);
            }
            Expr::Func(f, a) => {
                out.push_str(f.name());
                out.push('(');
                a.write(names, 0, out);
                out.push(')');
            }
            Expr::Bin(op, a, b) => {
                let (sym, l, r) = match op {
                    BinOp::Add => (" + ", 1, 2),
                    BinOp::Sub => (" - ", 1, 2),
                    BinOp::Mul => ("*", 2, 3),
                    BinOp::Div => ("/", 2, 3),
                    BinOp::Pow => ("^", 5, 3),
                };
                a.write(names, l, out);
                out.push_str(sym);
                b.write(names, r, out);
            }
        }
        if paren {
            out.push(')');
        }
    }
}

/// Shortest decimal text that parses back to the same `f64`.
pub fn fmt_number(v: f64) -> String {
    let a = v.abs();
    let mut s = String::new();
    if a == 0.0 || (1e-5..1e15).contains(&a) {
        let _ = write!(s, "{v}");
    } else {
        let _ = write!(s, "{v:e}");
    }
    s
}

impl Add for Expr {
    type Output = Expr;
    fn add(self, o: Expr) -> Expr {
        Expr::Bin(BinOp::Add, Box::new(self), Box::new(o))
    }
}

impl Sub for Expr {
    type Output = Expr;
    fn sub(self, o: Expr) -> Expr {
        Expr::Bin(BinOp::Sub, Box::new(self), Box::new(o))
    }
}

impl Mul for Expr {
    type Output = Expr;
    fn mul(self, o: Expr) -> Expr {
        Expr::Bin(BinOp::Mul, Box::new(self), Box::new(o))
    }
}

impl Div for Expr {
    type Output = Expr;
    fn div(self, o: Expr) -> Expr {
        Expr::Bin(BinOp::Div, Box::new(self), Box::new(o))
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("x{i}")).collect()
    }

    #[test]
    fn power_semantics() {
        let s = vec!["x".to_string()];
        let e = parse_expression("x^2", &s).unwrap();
        assert_eq!(e.eval(&[3.0]).unwrap(), 9.0);
        let e = parse_expression("x^-1", &s).unwrap();
        assert_eq!(e.eval(&[4.0]).unwrap(), 0.25);
        let e = parse_expression("x^0.5", &s).unwrap();
        assert_eq!(e.eval(&[-4.0]), Err(DomainKind::PowNegativeBase));
        let e = parse_expression("(-x)^3", &s).unwrap();
        assert_eq!(e.eval(&[2.0]).unwrap(), -8.0);
    }

    #[test]
    fn first_row_of_xi66_vanishes_at_base_point() {
        let e = parse_expression("(x1-x6)*(x3+x5)-(x2*x6-x6^2-x1)*ln(x6)", &names(6)).unwrap();
        assert_eq!(e.eval(&[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn domain_errors() {
        let s = names(1);
        let ev = |t: &str, x: f64| parse_expression(t, &s).unwrap().eval(&[x]);
        assert_eq!(ev("ln(x1)", 0.0), Err(DomainKind::LogNonPositive));
        assert_eq!(ev("sqrt(x1)", -1.0), Err(DomainKind::SqrtNegative));
        assert_eq!(ev("1/x1", 0.0), Err(DomainKind::DivisionByZero));
        assert!(ev("abs(x1)", -2.0).unwrap() == 2.0);
    }

    #[test]
    fn print_parse_roundtrip() {
        let s = names(3);
        for t in [
            "x1 - (x2 - x3)",
            "-x1^2",
            "(-x1)^2",
            "x1^x2^x3",
            "(x1^x2)^x3",
            "x1/(x2*x3)",
            "x1*-x2",
            "-(x1 + x2)*x3",
            "sin(x1)^2 + cos(-x2)/tan(x3)",
            "2e-30*x1 + 1e20",
            "x1^-2",
        ] {
            let e = parse_expression(t, &s).unwrap();
            let printed = e.to_text(&s);
            let back = parse_expression(&printed, &s).unwrap();
            assert_eq!(e, back, "{t} -> {printed}");
        }
    }

    #[test]
    fn substitution_composes() {
        let s = names(2);
        let e = parse_expression("x1*x2", &s).unwrap();
        let sub = e.substitute(&[Expr::var(1), Expr::constant(3.0)]);
        assert_eq!(sub.eval(&[10.0, 2.0]).unwrap(), 6.0);
    }
}
