//! Polynomial view of an expression, used for the leading-degree
//! coercivity certificate.

use super::expr::Expr;
use std::collections::BTreeMap;

/// Exponents over `(t, x1, .., xn)`.
type Monomial = Vec<u32>;

#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    dim: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl Poly {
    fn constant(dim: usize, c: f64) -> Poly {
        let mut terms = BTreeMap::new();
        if c != 0.0 {
            terms.insert(vec![0; dim + 1], c);
        }
        Poly { dim, terms }
    }

    fn variable(dim: usize, slot: usize) -> Poly {
        let mut m = vec![0; dim + 1];
        m[slot] = 1;
        Poly { dim, terms: BTreeMap::from([(m, 1.0)]) }
    }

    fn scale(mut self, c: f64) -> Poly {
        for v in self.terms.values_mut() {
            *v *= c;
        }
        self.terms.retain(|_, v| *v != 0.0);
        self
    }

    fn add(mut self, other: &Poly) -> Poly {
        for (m, c) in &other.terms {
            *self.terms.entry(m.clone()).or_insert(0.0) += c;
        }
        self.terms.retain(|_, v| *v != 0.0);
        self
    }

    fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::constant(self.dim, 0.0);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let m: Monomial = ma.iter().zip(mb).map(|(a, b)| a + b).collect();
                *out.terms.entry(m).or_insert(0.0) += ca * cb;
            }
        }
        out.terms.retain(|_, v| *v != 0.0);
        out
    }

    fn as_constant(&self) -> Option<f64> {
        match self.terms.len() {
            0 => Some(0.0),
            1 => {
                let (m, c) = self.terms.iter().next().unwrap();
                m.iter().all(|&e| e == 0).then_some(*c)
            }
            _ => None,
        }
    }

    /// Converts `e` to a polynomial in `(t, x)`; `None` if `e` uses a
    /// transcendental function.
    pub fn from_expr(e: &Expr, dim: usize) -> Option<Poly> {
        Some(match e {
            Expr::Num(v) => Poly::constant(dim, *v),
            Expr::Time => Poly::variable(dim, 0),
            Expr::Var(i) => Poly::variable(dim, i + 1),
            Expr::Neg(a) => Poly::from_expr(a, dim)?.scale(-1.0),
            Expr::Add(a, b) => Poly::from_expr(a, dim)?.add(&Poly::from_expr(b, dim)?),
            Expr::Sub(a, b) => Poly::from_expr(a, dim)?.add(&Poly::from_expr(b, dim)?.scale(-1.0)),
            Expr::Mul(a, b) => Poly::from_expr(a, dim)?.mul(&Poly::from_expr(b, dim)?),
            Expr::Div(a, b) => {
                let d = Poly::from_expr(b, dim)?.as_constant()?;
                Poly::from_expr(a, dim)?.scale(1.0 / d)
            }
            Expr::Pow(a, k) => {
                let base = Poly::from_expr(a, dim)?;
                if *k < 0 {
                    return Some(Poly::constant(dim, base.as_constant()?.powi(*k)));
                }
                let mut acc = Poly::constant(dim, 1.0);
                for _ in 0..*k {
                    acc = acc.mul(&base);
                }
                acc
            }
            Expr::Call(..) => {
                if e.is_constant() {
                    Poly::constant(dim, e.eval(0.0, &[]))
                } else {
                    return None;
                }
            }
        })
    }

    /// Leading-degree coercivity certificate.
    ///
    /// Let `d` be the top total degree in `x`. The certificate holds when `d`
    /// is even and at least 2, the degree-`d` part has `t`-independent
    /// coefficients, and after charging every mixed monomial `c_α x^α` to the
    /// pure powers through `|x^α| ≤ Σ (α_i/d) |x_i|^d` each pure coefficient
    /// `x_i^d` stays positive. Then `∇f·x` grows like `|x|^d` and coercivity holds
    /// for some constants.
    pub fn leading_degree_certified(&self) -> bool {
        let xdeg = |m: &Monomial| m[1..].iter().sum::<u32>();
        let d = match self.terms.keys().map(xdeg).max() {
            Some(d) => d,
            None => return false,
        };
        if d < 2 || d % 2 == 1 {
            return false;
        }
        let mut pure = vec![0.0; self.dim];
        let mut charge = vec![0.0; self.dim];
        for (m, c) in &self.terms {
            if xdeg(m) != d {
                continue;
            }
            if m[0] != 0 {
                return false;
            }
            let nz: Vec<usize> = (0..self.dim).filter(|&i| m[i + 1] > 0).collect();
            if nz.len() == 1 {
                pure[nz[0]] += c;
            } else {
                for &i in &nz {
                    charge[i] += c.abs() * m[i + 1] as f64 / d as f64;
                }
            }
        }
        pure.iter().zip(&charge).all(|(p, q)| p - q > 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::parse::parse_energy;

    fn certified(text: &str, n: usize) -> bool {
        Poly::from_expr(&parse_energy(text, n).unwrap(), n)
            .map(|p| p.leading_degree_certified())
            .unwrap_or(false)
    }

    #[test]
    fn certificates() {
        assert!(certified("x1^4/4 - x1^2/2 - t*x1", 1));
        assert!(certified("x1^2/2", 1));
        assert!(certified("((x1 - t)^2 + x2^2)/2", 2));
        assert!(!certified("-x1^2/2", 1));
        assert!(!certified("x1^3", 1));
        assert!(!certified("x1^4 + x2^4 - 10*x1^2*x2^2", 2));
        assert!(!certified("t*x1^4", 1));
        assert!(!certified("x1^2 + sin(x1)", 1));
        assert!(certified("x1^4/4 + x2^4/4 + (1 - x1)*x2^2/2", 2));
    }
}
