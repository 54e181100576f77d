//! Energies `f(t, x)`: parsing, exact symbolic derivatives, derivative
//! bundles and the coercivity check.

pub mod expr;
pub mod parse;
pub mod poly;
pub mod scenario;

mod coercivity;

pub use coercivity::{check_coercivity, CoercivityReport, GridSpec};
pub use expr::{Expr, Func, NonFinite, Variable};
pub use parse::{parse_energy, ParseError, ParseErrorKind};
pub use scenario::{InitialPointCheck, Scenario, ScenarioError, BUILTIN_NAMES};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EvalError {
    #[error("non-finite value {value} in subterm `{subterm}` at t={t}")]
    NonFinite { subterm: String, value: f64, t: f64 },
    #[error("time {t} outside [0, {horizon}]")]
    OutOfHorizon { t: f64, horizon: f64 },
    #[error("point has dimension {got}, expected {want}")]
    Dimension { got: usize, want: usize },
}

#[inline]
fn sym2(i: usize, j: usize) -> (usize, usize) {
    if i <= j {
        (i, j)
    } else {
        (j, i)
    }
}

/// Pre-differentiated energy: `f`, its `t`-derivatives, and every spatial
/// derivative up to third order, each stored once per index multiset.
#[derive(Clone, Debug)]
pub struct Energy {
    dim: usize,
    f: Expr,
    f_t: Expr,
    f_tt: Expr,
    grad: Vec<Expr>,
    grad_t: Vec<Expr>,
    /// upper triangle, row-major over `i ≤ j`
    hess: Vec<Expr>,
    hess_t: Vec<Expr>,
    /// `i ≤ j ≤ k`, lexicographic
    third: Vec<Expr>,
}

impl Energy {
    pub fn new(f: Expr, dim: usize) -> Energy {
        let f_t = f.derivative(Variable::Time);
        let f_tt = f_t.derivative(Variable::Time);
        let grad: Vec<Expr> = (0..dim).map(|i| f.derivative(Variable::X(i))).collect();
        let grad_t: Vec<Expr> = grad.iter().map(|g| g.derivative(Variable::Time)).collect();
        let mut hess = Vec::new();
        for i in 0..dim {
            for j in i..dim {
                hess.push(grad[i].derivative(Variable::X(j)));
            }
        }
        let hess_t = hess.iter().map(|h| h.derivative(Variable::Time)).collect();
        let mut third = Vec::new();
        for i in 0..dim {
            for j in i..dim {
                let hij = &hess[Self::hidx(dim, i, j)];
                for k in j..dim {
                    third.push(hij.derivative(Variable::X(k)));
                }
            }
        }
        Energy { dim, f, f_t, f_tt, grad, grad_t, hess, hess_t, third }
    }

    fn hidx(dim: usize, i: usize, j: usize) -> usize {
        let (i, j) = sym2(i, j);
        i * dim - i * (i + 1) / 2 + j
    }

    fn tidx(&self, i: usize, j: usize, k: usize) -> usize {
        let mut v = [i, j, k];
        v.sort_unstable();
        let [i, j, k] = v;
        let n = self.dim;
        let mut idx = 0;
        for a in 0..i {
            let m = n - a;
            idx += m * (m + 1) / 2;
        }
        for b in i..j {
            idx += n - b;
        }
        idx + (k - j)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn expr(&self) -> &Expr {
        &self.f
    }

    pub fn value(&self, t: f64, x: &DVector<f64>) -> f64 {
        self.f.eval(t, x.as_slice())
    }

    pub fn f_t(&self, t: f64, x: &DVector<f64>) -> f64 {
        self.f_t.eval(t, x.as_slice())
    }

    pub fn f_tt(&self, t: f64, x: &DVector<f64>) -> f64 {
        self.f_tt.eval(t, x.as_slice())
    }

    pub fn gradient(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.dim, self.grad.iter().map(|g| g.eval(t, x.as_slice())))
    }

    pub fn grad_t(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.dim, self.grad_t.iter().map(|g| g.eval(t, x.as_slice())))
    }

    fn sym_matrix(&self, packed: &[Expr], t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dim;
        let mut m = DMatrix::zeros(n, n);
        let mut idx = 0;
        for i in 0..n {
            for j in i..n {
                let v = packed[idx].eval(t, x.as_slice());
                m[(i, j)] = v;
                m[(j, i)] = v;
                idx += 1;
            }
        }
        m
    }

    pub fn hessian(&self, t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        self.sym_matrix(&self.hess, t, x)
    }

    pub fn hess_t(&self, t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        self.sym_matrix(&self.hess_t, t, x)
    }

    /// `Σ_ijk f_{x_i x_j x_k} ℓ_i ℓ_j ℓ_k`
    pub fn third_form(&self, t: f64, x: &DVector<f64>, ell: &DVector<f64>) -> f64 {
        let n = self.dim;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    s += self.third[self.tidx(i, j, k)].eval(t, x.as_slice()) * ell[i] * ell[j] * ell[k];
                }
            }
        }
        s
    }

    /// Matrix `M_ij = Σ_k f_{x_i x_j x_k} ℓ_k`, the `x`-derivative of `∇²f·ℓ`
    /// contracted the other way round.
    pub fn third_contract(&self, t: f64, x: &DVector<f64>, ell: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dim;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += self.third[self.tidx(i, j, k)].eval(t, x.as_slice()) * ell[k];
                }
                m[(i, j)] = s;
                m[(j, i)] = s;
            }
        }
        m
    }

    /// Evaluates every stored expression and reports the first non-finite
    /// subterm, if any.
    pub fn check_finite(&self, t: f64, x: &DVector<f64>) -> Result<(), EvalError> {
        let all = std::iter::once(&self.f)
            .chain(&self.grad)
            .chain(&self.grad_t)
            .chain(&self.hess)
            .chain(std::iter::once(&self.f_t));
        for e in all {
            e.eval_checked(t, x.as_slice())
                .map_err(|nf| EvalError::NonFinite { subterm: nf.subterm, value: nf.value, t })?;
        }
        Ok(())
    }
}

/// Values of `f` and its derivatives at one `(t, x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeBundle {
    pub f: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
    pub grad_t: DVector<f64>,
    /// Cubic form along the supplied direction, when one was given.
    pub third: Option<f64>,
}

/// Evaluates the derivative bundle of the scenario's energy at `(t, x)`.
pub fn eval_bundle(
    scenario: &Scenario,
    t: f64,
    x: &DVector<f64>,
    ell: Option<&DVector<f64>>,
) -> Result<DerivativeBundle, EvalError> {
    let energy = scenario.energy();
    if x.len() != energy.dim() {
        return Err(EvalError::Dimension { got: x.len(), want: energy.dim() });
    }
    if !(0.0..=scenario.horizon).contains(&t) {
        return Err(EvalError::OutOfHorizon { t, horizon: scenario.horizon });
    }
    energy.check_finite(t, x)?;
    let third = match ell {
        Some(l) => {
            let c = energy.third_form(t, x, l);
            if !c.is_finite() {
                return Err(EvalError::NonFinite { subterm: "third-order form".into(), value: c, t });
            }
            Some(c)
        }
        None => None,
    };
    Ok(DerivativeBundle {
        f: energy.value(t, x),
        grad: energy.gradient(t, x),
        hess: energy.hessian(t, x),
        grad_t: energy.grad_t(t, x),
        third,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn dwell_bundle_at_left_minimum() {
        let s = Scenario::builtin("dwell").unwrap();
        let b = eval_bundle(&s, 0.0, &v(&[-1.0]), None).unwrap();
        assert!((b.f + 0.25).abs() < 1e-15);
        assert_eq!(b.grad[0], 0.0);
        assert_eq!(b.hess[(0, 0)], 2.0);
        assert_eq!(b.grad_t[0], -1.0);
    }

    #[test]
    fn dwell_bundle_at_fold() {
        let s = Scenario::builtin("dwell").unwrap();
        let t1 = 2.0 / (3.0 * 3f64.sqrt());
        let x1 = -1.0 / 3f64.sqrt();
        let b = eval_bundle(&s, t1, &v(&[x1]), Some(&v(&[1.0]))).unwrap();
        assert!(b.grad[0].abs() < 1e-15);
        assert!(b.hess[(0, 0)].abs() < 1e-15);
        assert!((b.third.unwrap() + 2.0 * 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn quadratic_bundle_is_identity() {
        let s = Scenario::builtin_with_dim("quadratic", 3).unwrap();
        let b = eval_bundle(&s, 0.3, &v(&[0.0, 0.0, 0.0]), None).unwrap();
        assert_eq!(b.grad, v(&[0.0, 0.0, 0.0]));
        assert_eq!(b.hess, DMatrix::identity(3, 3));
    }

    #[test]
    fn third_form_is_cubic_in_direction() {
        let s = Scenario::builtin("dwell2d").unwrap();
        let e = s.energy();
        let x = v(&[0.3, -0.7]);
        let l = v(&[0.6, 0.8]);
        let c = e.third_form(0.1, &x, &l);
        for alpha in [-2.0, 0.5, 3.0] {
            let ca = e.third_form(0.1, &x, &(&l * alpha));
            assert!((ca - alpha * alpha * alpha * c).abs() < 1e-12 * (1.0 + ca.abs()));
        }
    }

    #[test]
    fn overflow_is_reported_with_subterm() {
        let s = Scenario::from_text("name = blow\nn = 1\nT = 1\nf = exp(x1^3) + x1^2\nc0 = 1\na0 = 0\ny0 = 0\neps = 0.1").unwrap();
        let err = eval_bundle(&s, 0.0, &v(&[30.0]), None).unwrap_err();
        match err {
            EvalError::NonFinite { subterm, .. } => assert!(subterm.contains("exp"), "{subterm}"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            eval_bundle(&s, 2.0, &v(&[0.0]), None),
            Err(EvalError::OutOfHorizon { .. })
        ));
    }

    #[test]
    fn third_index_covers_all_multisets() {
        let e = Energy::new(Expr::Num(0.0), 4);
        let mut seen = std::collections::BTreeSet::new();
        for i in 0..4 {
            for j in i..4 {
                for k in j..4 {
                    seen.insert(e.tidx(i, j, k));
                    assert_eq!(e.tidx(i, j, k), e.tidx(k, i, j));
                }
            }
        }
        assert_eq!(seen.len(), 20);
        assert_eq!(*seen.iter().max().unwrap(), 19);
    }
}
