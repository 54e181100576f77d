//! Expression trees for energies `f(t, x)`.
//!
//! The admitted grammar is closed under differentiation and every admitted
//! tree is C^∞ on `[0,T] × ℝⁿ`: denominators are constants, exponents are
//! integer literals, and the only transcendental functions are entire ones.

use std::fmt;

/// Unary elementary function admitted by the grammar.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Sin,
    Cos,
    Tanh,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tanh => "tanh",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        match name {
            "exp" => Some(Func::Exp),
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "tanh" => Some(Func::Tanh),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Exp => v.exp(),
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tanh => v.tanh(),
        }
    }
}

/// Differentiation variable: the time `t` or a spatial coordinate (0-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variable {
    Time,
    X(usize),
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variable::Time => write!(f, "t"),
            Variable::X(i) => write!(f, "x{}", i + 1),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Time,
    /// Spatial coordinate, 0-based (`x1` is `Var(0)`).
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

/// A subterm evaluated to a non-finite value.
#[derive(Clone, Debug, PartialEq)]
pub struct NonFinite {
    pub subterm: String,
    pub value: f64,
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    /// True when the tree contains neither `t` nor any `x_i`.
    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Num(_) => true,
            Expr::Time | Expr::Var(_) => false,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.is_constant(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.is_constant() && b.is_constant()
            }
        }
    }

    pub fn depends_on(&self, var: Variable) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Time => var == Variable::Time,
            Expr::Var(i) => var == Variable::X(*i),
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.depends_on(var),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.depends_on(var) || b.depends_on(var)
            }
        }
    }

    /// Largest spatial index referenced plus one (0 when no `x_i` occurs).
    pub fn max_var(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Time => 0,
            Expr::Var(i) => i + 1,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.max_var(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.max_var().max(b.max_var())
            }
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Time | Expr::Var(_) => 1,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => 1 + a.size(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                1 + a.size() + b.size()
            }
        }
    }

    /// Number of top-level additive terms (`a - b + c` has three).
    pub fn additive_terms(&self) -> usize {
        match self {
            Expr::Add(a, b) | Expr::Sub(a, b) => a.additive_terms() + b.additive_terms(),
            _ => 1,
        }
    }

    #[inline]
    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Time => t,
            Expr::Var(i) => x[*i],
            Expr::Neg(a) => -a.eval(t, x),
            Expr::Add(a, b) => a.eval(t, x) + b.eval(t, x),
            Expr::Sub(a, b) => a.eval(t, x) - b.eval(t, x),
            Expr::Mul(a, b) => a.eval(t, x) * b.eval(t, x),
            Expr::Div(a, b) => a.eval(t, x) / b.eval(t, x),
            Expr::Pow(a, k) => a.eval(t, x).powi(*k),
            Expr::Call(func, a) => func.apply(a.eval(t, x)),
        }
    }

    /// Evaluates and, on a non-finite result, locates the innermost subterm
    /// whose value first became non-finite.
    pub fn eval_checked(&self, t: f64, x: &[f64]) -> Result<f64, NonFinite> {
        let v = self.eval(t, x);
        if v.is_finite() {
            return Ok(v);
        }
        Err(self.locate_non_finite(t, x))
    }

    fn locate_non_finite(&self, t: f64, x: &[f64]) -> NonFinite {
        let children: Vec<&Expr> = match self {
            Expr::Num(_) | Expr::Time | Expr::Var(_) => vec![],
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => vec![a],
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => vec![a, b],
        };
        for c in children {
            if !c.eval(t, x).is_finite() {
                return c.locate_non_finite(t, x);
            }
        }
        NonFinite {
            subterm: self.to_string(),
            value: self.eval(t, x),
        }
    }

    /// Exact symbolic derivative, lightly simplified.
    pub fn derivative(&self, var: Variable) -> Expr {
        if !self.depends_on(var) {
            return Expr::Num(0.0);
        }
        match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Time => Expr::Num(if var == Variable::Time { 1.0 } else { 0.0 }),
            Expr::Var(i) => Expr::Num(if var == Variable::X(*i) { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.derivative(var)),
            Expr::Add(a, b) => add(a.derivative(var), b.derivative(var)),
            Expr::Sub(a, b) => sub(a.derivative(var), b.derivative(var)),
            Expr::Mul(a, b) => add(
                mul(a.derivative(var), (**b).clone()),
                mul((**a).clone(), b.derivative(var)),
            ),
            Expr::Div(a, b) => {
                if b.depends_on(var) {
                    // Never reached for admitted expressions; kept total.
                    div(
                        sub(
                            mul(a.derivative(var), (**b).clone()),
                            mul((**a).clone(), b.derivative(var)),
                        ),
                        pow((**b).clone(), 2),
                    )
                } else {
                    div(a.derivative(var), (**b).clone())
                }
            }
            Expr::Pow(a, k) => {
                if *k == 0 {
                    return Expr::Num(0.0);
                }
                mul(
                    mul(Expr::Num(*k as f64), pow((**a).clone(), k - 1)),
                    a.derivative(var),
                )
            }
            Expr::Call(func, a) => {
                let inner = a.derivative(var);
                let outer = match func {
                    Func::Exp => call(Func::Exp, (**a).clone()),
                    Func::Sin => call(Func::Cos, (**a).clone()),
                    Func::Cos => neg(call(Func::Sin, (**a).clone())),
                    Func::Tanh => sub(Expr::Num(1.0), pow(call(Func::Tanh, (**a).clone()), 2)),
                };
                mul(outer, inner)
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            Expr::Num(v) if *v < 0.0 || v.is_sign_negative() => 3,
            Expr::Num(_) | Expr::Time | Expr::Var(_) | Expr::Call(..) => 5,
        }
    }
}

fn num_of(e: &Expr) -> Option<f64> {
    match e {
        Expr::Num(v) => Some(*v),
        _ => None,
    }
}

pub fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) => Expr::Num(-v),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

pub fn add(a: Expr, b: Expr) -> Expr {
    match (num_of(&a), num_of(&b)) {
        (Some(x), Some(y)) => Expr::Num(x + y),
        (Some(0.0), _) => b,
        (_, Some(0.0)) => a,
        _ => match b {
            Expr::Neg(inner) => Expr::Sub(Box::new(a), inner),
            b => Expr::Add(Box::new(a), Box::new(b)),
        },
    }
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    match (num_of(&a), num_of(&b)) {
        (Some(x), Some(y)) => Expr::Num(x - y),
        (Some(0.0), _) => neg(b),
        (_, Some(0.0)) => a,
        _ => match b {
            Expr::Neg(inner) => Expr::Add(Box::new(a), inner),
            b => Expr::Sub(Box::new(a), Box::new(b)),
        },
    }
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    match (num_of(&a), num_of(&b)) {
        (Some(x), Some(y)) => Expr::Num(x * y),
        (Some(0.0), _) => Expr::Num(0.0),
        (_, Some(0.0)) => Expr::Num(0.0),
        (Some(1.0), _) => b,
        (_, Some(1.0)) => a,
        (Some(-1.0), _) => neg(b),
        (_, Some(-1.0)) => neg(a),
        (None, Some(_)) => mul(b, a),
        (Some(x), None) => match b {
            // fold nested numeric factors: c1 * (c2 * e) -> (c1 c2) * e
            Expr::Mul(l, r) if num_of(&l).is_some() => mul(Expr::Num(x * num_of(&l).unwrap()), *r),
            Expr::Neg(inner) => mul(Expr::Num(-x), *inner),
            b => Expr::Mul(Box::new(a), Box::new(b)),
        },
        (None, None) => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

pub fn div(a: Expr, b: Expr) -> Expr {
    match (num_of(&a), num_of(&b)) {
        (Some(x), Some(y)) if y != 0.0 => Expr::Num(x / y),
        (Some(0.0), _) => Expr::Num(0.0),
        (_, Some(1.0)) => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

pub fn pow(a: Expr, k: i32) -> Expr {
    match (k, num_of(&a)) {
        (0, _) => Expr::Num(1.0),
        (1, _) => a,
        (_, Some(v)) => Expr::Num(v.powi(k)),
        _ => Expr::Pow(Box::new(a), k),
    }
}

pub fn call(func: Func, a: Expr) -> Expr {
    match num_of(&a) {
        Some(v) => Expr::Num(func.apply(v)),
        None => Expr::Call(func, Box::new(a)),
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, child: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({child})")
    } else {
        write!(f, "{child}")
    }
}

fn write_number(f: &mut fmt::Formatter<'_>, v: f64) -> fmt::Result {
    // Display for f64 prints the shortest string that parses back exactly.
    if v.is_sign_negative() {
        write!(f, "-{}", -v)
    } else {
        write!(f, "{v}")
    }
}

impl fmt::Display for Expr {
    /// Prints with the minimal parentheses that reproduce the same tree when
    /// parsed back (binary operators are left-associative).
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.precedence();
        match self {
            Expr::Num(v) => write_number(f, *v),
            Expr::Time => write!(f, "t"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Neg(a) => {
                write!(f, "-")?;
                write_child(f, a, a.precedence() < p)
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                let op = match self {
                    Expr::Add(..) => " + ",
                    Expr::Sub(..) => " - ",
                    Expr::Mul(..) => "*",
                    _ => "/",
                };
                write_child(f, a, a.precedence() < p)?;
                write!(f, "{op}")?;
                write_child(f, b, b.precedence() <= p)
            }
            Expr::Pow(a, k) => {
                write_child(f, a, a.precedence() <= p)?;
                write!(f, "^{k}")
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(i: usize) -> Expr {
        Expr::Var(i)
    }

    #[test]
    fn derivative_of_quartic() {
        // x^4/4 - x^2/2 - t*x
        let e = sub(
            sub(div(pow(x(0), 4), Expr::num(4.0)), div(pow(x(0), 2), Expr::num(2.0))),
            mul(Expr::Time, x(0)),
        );
        let d = e.derivative(Variable::X(0));
        for &(t, xv) in &[(0.0, -1.0), (0.3, 0.7), (0.6, 2.0)] {
            let want: f64 = xv * xv * xv - xv - t;
            assert!((d.eval(t, &[xv]) - want).abs() < 1e-14);
        }
        let dt = pow(x(0), 2).derivative(Variable::Time);
        assert_eq!(dt, Expr::Num(0.0));
    }

    #[test]
    fn third_derivative_of_quartic() {
        let e = div(pow(x(0), 4), Expr::num(4.0));
        let d3 = e
            .derivative(Variable::X(0))
            .derivative(Variable::X(0))
            .derivative(Variable::X(0));
        let x1 = -1.0 / 3f64.sqrt();
        assert!((d3.eval(0.0, &[x1]) + 2.0 * 3f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn transcendental_rules() {
        let e = mul(call(Func::Sin, x(0)), call(Func::Tanh, mul(Expr::Time, x(0))));
        let d = e.derivative(Variable::X(0));
        let (t, xv) = (0.4f64, 0.9f64);
        let th: f64 = (t * xv).tanh();
        let want = xv.cos() * th + xv.sin() * (1.0 - th * th) * t;
        assert!((d.eval(t, &[xv]) - want).abs() < 1e-14);
    }

    #[test]
    fn locates_overflowing_subterm() {
        let e = add(call(Func::Exp, pow(x(0), 3)), x(0));
        let err = e.eval_checked(0.0, &[20.0]).unwrap_err();
        assert!(err.subterm.starts_with("exp("), "{}", err.subterm);
    }

    #[test]
    fn printing_respects_associativity() {
        let e = Expr::Sub(
            Box::new(x(0)),
            Box::new(Expr::Sub(Box::new(x(1)), Box::new(Expr::Num(2.0)))),
        );
        assert_eq!(e.to_string(), "x1 - (x2 - 2)");
        let p = Expr::Pow(Box::new(Expr::Neg(Box::new(x(0)))), 2);
        assert_eq!(p.to_string(), "(-x1)^2");
        let n = Expr::Neg(Box::new(Expr::Pow(Box::new(x(0)), 2)));
        assert_eq!(n.to_string(), "-x1^2");
    }
}
