//! Closed-form coefficient expressions.
//!
//! Coefficients of the operator are expression trees over the node
//! coordinates, time, and the derivative slots `u, ∇u, …, ∇^{2p-1}u`. Trees
//! can be evaluated over any [`Scalar`] (plain `f64` or a truncated time
//! [`Series`]) and differentiated symbolically with respect to any slot.

mod parse;
mod series;

pub use parse::{parse, ParseContext};
pub use series::Series;

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::torus::{axis_name, MultiIndex};

/// Arithmetic needed to evaluate an [`Expr`].
pub trait Scalar:
    Clone + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn from_f64(c: f64) -> Self;
    /// Leading real value; used for branch decisions.
    fn value(&self) -> f64;
    fn scale(&self, c: f64) -> Self;
    fn exp(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn ln(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn abs(&self) -> Self;
    fn powi(&self, n: i32) -> Self;
    fn powf(&self, r: f64) -> Self;
}

impl Scalar for f64 {
    fn from_f64(c: f64) -> Self {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn scale(&self, c: f64) -> Self {
        c * self
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn powi(&self, n: i32) -> Self {
        f64::powi(*self, n)
    }
    fn powf(&self, r: f64) -> Self {
        f64::powf(*self, r)
    }
}

/// Leaf variables of a coefficient expression.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    Coord(usize),
    Time,
    /// `∂^α u`; the zero multi-index is `u` itself.
    Slot(MultiIndex),
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::Coord(a) => write!(f, "{}", axis_name(*a)),
            Var::Time => f.write_str("t"),
            Var::Slot(m) => write!(f, "{m}"),
        }
    }
}

/// Smooth scalar primitives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Sign,
    /// `1/(2√x)` for `x > 0`, zero otherwise (a subgradient choice at the origin).
    HalfInvSqrt,
    /// `k`-th derivative of the quintic smoothstep `10z³ − 15z⁴ + 6z⁵` clamped to `[0, 1]`.
    Smoothstep(u8),
}

impl Func {
    fn name(&self) -> String {
        match self {
            Func::Sin => "sin".into(),
            Func::Cos => "cos".into(),
            Func::Exp => "exp".into(),
            Func::Ln => "log".into(),
            Func::Sqrt => "sqrt".into(),
            Func::Abs => "abs".into(),
            Func::Sign => "sign".into(),
            Func::HalfInvSqrt => "half_inv_sqrt".into(),
            Func::Smoothstep(0) => "smoothstep".into(),
            Func::Smoothstep(k) => format!("smoothstep_d{k}"),
        }
    }

    fn apply<S: Scalar>(&self, x: S) -> S {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Exp => x.exp(),
            Func::Ln => x.ln(),
            Func::Sqrt => x.sqrt(),
            Func::Abs => x.abs(),
            Func::Sign => {
                let v = x.value();
                S::from_f64(if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                })
            }
            Func::HalfInvSqrt => {
                if x.value() > 0.0 {
                    x.powf(-0.5).scale(0.5)
                } else {
                    S::from_f64(0.0)
                }
            }
            Func::Smoothstep(k) => smoothstep(*k, x),
        }
    }
}

/// Monomial coefficients (ascending powers) of the k-th derivative of the quintic smoothstep.
const SMOOTHSTEP_POLYS: [&[f64]; 6] = [
    &[0.0, 0.0, 0.0, 10.0, -15.0, 6.0],
    &[0.0, 0.0, 30.0, -60.0, 30.0],
    &[0.0, 60.0, -180.0, 120.0],
    &[60.0, -360.0, 360.0],
    &[-360.0, 720.0],
    &[720.0],
];

fn smoothstep<S: Scalar>(k: u8, z: S) -> S {
    let k = k as usize;
    let z0 = z.value();
    if k >= SMOOTHSTEP_POLYS.len() {
        return S::from_f64(0.0);
    }
    if z0 <= 0.0 {
        return S::from_f64(0.0);
    }
    if z0 >= 1.0 {
        return S::from_f64(if k == 0 { 1.0 } else { 0.0 });
    }
    let coeffs = SMOOTHSTEP_POLYS[k];
    let mut acc = S::from_f64(*coeffs.last().unwrap());
    for &c in coeffs.iter().rev().skip(1) {
        acc = acc * z.clone() + S::from_f64(c);
    }
    acc
}

/// Expression tree; build through the simplifying constructors.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Add(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, f64),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn zero() -> Expr {
        Expr::Const(0.0)
    }

    pub fn one() -> Expr {
        Expr::Const(1.0)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn slot(m: MultiIndex) -> Expr {
        Expr::Var(Var::Slot(m))
    }

    pub fn u() -> Expr {
        Expr::slot(MultiIndex::ZERO)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn sum(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x + y),
            (Some(x), _) if x == 0.0 => b,
            (_, Some(y)) if y == 0.0 => a,
            _ => Expr::Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn difference(a: Expr, b: Expr) -> Expr {
        Expr::sum(a, Expr::negate(b))
    }

    pub fn product(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x * y),
            (Some(x), _) | (_, Some(x)) if x == 0.0 => Expr::zero(),
            (Some(x), _) if x == 1.0 => b,
            (_, Some(y)) if y == 1.0 => a,
            (Some(x), _) if x == -1.0 => Expr::negate(b),
            (_, Some(y)) if y == -1.0 => Expr::negate(a),
            _ => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    pub fn quotient(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) if y != 0.0 => Expr::Const(x / y),
            (Some(x), _) if x == 0.0 => Expr::zero(),
            (_, Some(y)) if y == 1.0 => a,
            _ => Expr::Div(Box::new(a), Box::new(b)),
        }
    }

    pub fn negate(a: Expr) -> Expr {
        match a {
            Expr::Const(c) => Expr::Const(-c),
            Expr::Neg(inner) => *inner,
            other => Expr::Neg(Box::new(other)),
        }
    }

    pub fn power(a: Expr, r: f64) -> Expr {
        if r == 0.0 {
            return Expr::one();
        }
        if r == 1.0 {
            return a;
        }
        match a.as_const() {
            Some(c) => Expr::Const(c.powf(r)),
            None => Expr::Pow(Box::new(a), r),
        }
    }

    pub fn call(f: Func, a: Expr) -> Expr {
        if let Some(c) = a.as_const() {
            return Expr::Const(f.apply(c));
        }
        if let Func::Smoothstep(k) = f {
            if k as usize >= SMOOTHSTEP_POLYS.len() {
                return Expr::zero();
            }
        }
        Expr::Call(f, Box::new(a))
    }

    /// Evaluates the tree, reading leaves from `env`.
    pub fn eval<S: Scalar>(&self, env: &dyn Fn(Var) -> S) -> S {
        match self {
            Expr::Const(c) => S::from_f64(*c),
            Expr::Var(v) => env(*v),
            Expr::Add(a, b) => a.eval(env) + b.eval(env),
            Expr::Mul(a, b) => a.eval(env) * b.eval(env),
            Expr::Div(a, b) => a.eval(env) / b.eval(env),
            Expr::Neg(a) => -a.eval(env),
            Expr::Pow(a, r) => {
                let base = a.eval(env);
                if r.fract() == 0.0 && r.abs() <= i32::MAX as f64 {
                    base.powi(*r as i32)
                } else {
                    base.powf(*r)
                }
            }
            Expr::Call(f, a) => f.apply(a.eval(env)),
        }
    }

    /// Symbolic derivative with respect to one leaf variable.
    pub fn diff(&self, v: Var) -> Expr {
        match self {
            Expr::Const(_) => Expr::zero(),
            Expr::Var(w) => Expr::Const(if *w == v { 1.0 } else { 0.0 }),
            Expr::Add(a, b) => Expr::sum(a.diff(v), b.diff(v)),
            Expr::Mul(a, b) => {
                Expr::sum(Expr::product(a.diff(v), (**b).clone()), Expr::product((**a).clone(), b.diff(v)))
            }
            Expr::Div(a, b) => {
                // (a'b − ab')/b²
                let num =
                    Expr::difference(Expr::product(a.diff(v), (**b).clone()), Expr::product((**a).clone(), b.diff(v)));
                if num.is_zero() {
                    return Expr::zero();
                }
                Expr::quotient(num, Expr::power((**b).clone(), 2.0))
            }
            Expr::Neg(a) => Expr::negate(a.diff(v)),
            Expr::Pow(a, r) => {
                let da = a.diff(v);
                if da.is_zero() {
                    return Expr::zero();
                }
                Expr::product(Expr::product(Expr::Const(*r), Expr::power((**a).clone(), r - 1.0)), da)
            }
            Expr::Call(f, a) => {
                let da = a.diff(v);
                if da.is_zero() {
                    return Expr::zero();
                }
                let inner = (**a).clone();
                let outer = match f {
                    Func::Sin => Expr::call(Func::Cos, inner),
                    Func::Cos => Expr::negate(Expr::call(Func::Sin, inner)),
                    Func::Exp => Expr::call(Func::Exp, inner),
                    Func::Ln => Expr::quotient(Expr::one(), inner),
                    Func::Sqrt => Expr::call(Func::HalfInvSqrt, inner),
                    Func::Abs => Expr::call(Func::Sign, inner),
                    Func::Sign => Expr::zero(),
                    Func::HalfInvSqrt => Expr::product(Expr::Const(-0.25), Expr::power(inner, -1.5)),
                    Func::Smoothstep(k) => Expr::call(Func::Smoothstep(k + 1), inner),
                };
                Expr::product(outer, da)
            }
        }
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                out.insert(*v);
            }
            Expr::Add(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.collect_vars(out),
        }
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        let mut s = BTreeSet::new();
        self.collect_vars(&mut s);
        s
    }

    /// Highest derivative slot order read by the expression, if any slot is read.
    pub fn max_slot_order(&self) -> Option<usize> {
        self.vars()
            .into_iter()
            .filter_map(|v| match v {
                Var::Slot(m) => Some(m.order()),
                _ => None,
            })
            .max()
    }

    pub fn depends_on_state(&self) -> bool {
        self.vars().iter().any(|v| matches!(v, Var::Slot(_)))
    }

    /// Evaluates an expression that reads only coordinates and time.
    pub fn eval_at(&self, x: &[f64], t: f64) -> f64 {
        self.eval(&|v| match v {
            Var::Coord(a) => x.get(a).copied().unwrap_or(0.0),
            Var::Time => t,
            Var::Slot(_) => f64::NAN,
        })
    }

    /// Total time derivative of an expression in `(x, t)` only.
    pub fn time_derivative(&self) -> Expr {
        self.diff(Var::Time)
    }

    pub fn pi() -> Expr {
        Expr::Const(PI)
    }
}

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) => 1,
        Expr::Mul(..) | Expr::Div(..) => 2,
        Expr::Neg(..) => 3,
        Expr::Pow(..) => 4,
        Expr::Const(c) if *c < 0.0 => 3,
        _ => 5,
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, child: &Expr, min_prec: u8) -> fmt::Result {
    if precedence(child) < min_prec {
        write!(f, "({child})")
    } else {
        write!(f, "{child}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Add(a, b) => {
                write_child(f, a, 1)?;
                if let Expr::Neg(inner) = &**b {
                    f.write_str(" - ")?;
                    write_child(f, inner, 2)
                } else {
                    f.write_str(" + ")?;
                    write_child(f, b, 1)
                }
            }
            Expr::Mul(a, b) => {
                write_child(f, a, 2)?;
                f.write_str("*")?;
                write_child(f, b, 3)
            }
            Expr::Div(a, b) => {
                write_child(f, a, 2)?;
                f.write_str("/")?;
                write_child(f, b, 3)
            }
            Expr::Neg(a) => {
                f.write_str("-")?;
                write_child(f, a, 3)
            }
            Expr::Pow(a, r) => {
                write_child(f, a, 5)?;
                if *r < 0.0 {
                    write!(f, "^({r})")
                } else {
                    write!(f, "^{r}")
                }
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env1(u: f64, ux: f64) -> impl Fn(Var) -> f64 {
        move |v| match v {
            Var::Slot(m) if m.order() == 0 => u,
            Var::Slot(_) => ux,
            Var::Coord(_) => 0.3,
            Var::Time => 0.1,
        }
    }

    #[test]
    fn derivative_of_polynomial_coefficient() {
        let u = Expr::u();
        let e = Expr::sum(Expr::one(), Expr::power(u, 2.0));
        let d = e.diff(Var::Slot(MultiIndex::ZERO));
        assert_eq!(d.eval(&env1(1.5, 0.0)), 3.0);
        assert!(e.diff(Var::Time).is_zero());
    }

    #[test]
    fn derivatives_match_central_differences() {
        let u = Expr::u();
        let ux = Expr::slot(MultiIndex::from_axes(&[0]));
        let cases = vec![
            Expr::call(Func::Exp, Expr::product(u.clone(), ux.clone())),
            Expr::quotient(
                Expr::call(Func::Sin, u.clone()),
                Expr::sum(Expr::Const(2.0), Expr::call(Func::Cos, ux.clone())),
            ),
            Expr::power(Expr::sum(Expr::Const(3.0), u.clone()), 0.5),
            Expr::call(Func::Smoothstep(0), Expr::product(Expr::Const(0.4), u.clone())),
            Expr::call(Func::Sqrt, Expr::sum(Expr::power(u.clone(), 2.0), Expr::power(ux.clone(), 2.0))),
            Expr::call(Func::Ln, Expr::sum(Expr::Const(2.0), Expr::call(Func::Abs, u.clone()))),
        ];
        let h = 1e-6;
        for e in cases {
            let d = e.diff(Var::Slot(MultiIndex::ZERO));
            let (u0, ux0) = (0.7, -0.4);
            let fd = (e.eval(&env1(u0 + h, ux0)) - e.eval(&env1(u0 - h, ux0))) / (2.0 * h);
            let exact: f64 = d.eval(&env1(u0, ux0));
            assert!((fd - exact).abs() < 1e-7, "{e}: {fd} vs {exact}");
        }
    }

    #[test]
    fn smoothstep_is_clamped_and_c2() {
        let s = |z: f64| smoothstep(0, z);
        assert_eq!(s(-0.5), 0.0);
        assert_eq!(s(1.5), 1.0);
        assert!((s(0.5) - 0.5).abs() < 1e-15);
        for k in 1..=2 {
            assert!(smoothstep(k, 1e-12_f64).abs() < 1e-9);
            assert!(smoothstep(k, 1.0 - 1e-12_f64).abs() < 1e-9);
        }
    }

    #[test]
    fn series_evaluation_matches_scalar_derivatives() {
        // f(t) = exp(sin t)·(1+t²) at t0 = 0.3; compare first coefficients with finite differences
        let t = Expr::var(Var::Time);
        let e = Expr::product(
            Expr::call(Func::Exp, Expr::call(Func::Sin, t.clone())),
            Expr::sum(Expr::one(), Expr::power(t, 2.0)),
        );
        let s: Series = e.eval(&|v| match v {
            Var::Time => Series::variable(0.3, 3),
            _ => Series::constant(0.0),
        });
        let f = |t: f64| e.eval_at(&[], t);
        let h = 1e-4;
        let d1 = (f(0.3 + h) - f(0.3 - h)) / (2.0 * h);
        let d2 = (f(0.3 + h) - 2.0 * f(0.3) + f(0.3 - h)) / (h * h);
        assert!((s.coeff(0) - f(0.3)).abs() < 1e-14);
        assert!((s.coeff(1) - d1).abs() < 1e-7);
        assert!((2.0 * s.coeff(2) - d2).abs() < 1e-5);
    }

    #[test]
    fn constant_folding_detects_zero_derivatives() {
        let e = Expr::product(Expr::Const(2.0), Expr::call(Func::Cos, Expr::var(Var::Coord(0))));
        assert!(e.diff(Var::Slot(MultiIndex::ZERO)).is_zero());
        assert!(!e.depends_on_state());
    }
}
