//! Alexander's three-stage, stiffly accurate, L-stable SDIRK method of
//! order 3 with an embedded order-2 solution.

use crate::linalg::solve;
use nalgebra::{DMatrix, DVector};

pub const GAMMA: f64 = 0.435_866_521_508_459;

pub struct Tableau {
    pub a: [[f64; 3]; 3],
    pub c: [f64; 3],
    pub b: [f64; 3],
    pub b_hat: [f64; 3],
}

pub fn tableau() -> Tableau {
    let g = GAMMA;
    let b1 = -1.5 * g * g + 4.0 * g - 0.25;
    let b2 = 1.5 * g * g - 5.0 * g + 1.25;
    let bh2 = (1.0 - 2.0 * g) / (1.0 - g);
    Tableau {
        a: [[g, 0.0, 0.0], [(1.0 - g) / 2.0, g, 0.0], [b1, b2, g]],
        c: [g, (1.0 + g) / 2.0, 1.0],
        b: [b1, b2, g],
        b_hat: [1.0 - bh2, bh2, 0.0],
    }
}

/// Right-hand side `F(t, u)` with its Jacobian.
pub trait StiffSystem {
    fn rhs(&self, t: f64, u: &DVector<f64>) -> DVector<f64>;
    fn jacobian(&self, t: f64, u: &DVector<f64>) -> DMatrix<f64>;
}

pub struct StepResult {
    pub u: DVector<f64>,
    /// Filtered local error estimate.
    pub err: DVector<f64>,
    /// Largest final Newton correction over the stages.
    pub residual: f64,
}

/// One step of size `h` from `(t, u)`; `None` when a stage Newton iteration
/// fails to converge.
pub fn step<S: StiffSystem>(sys: &S, t: f64, u: &DVector<f64>, h: f64, newton_tol: f64) -> Option<StepResult> {
    let tab = tableau();
    let n = u.len();
    let eye = DMatrix::<f64>::identity(n, n);
    let hg = h * GAMMA;
    let mut k: Vec<DVector<f64>> = Vec::with_capacity(3);
    let mut residual = 0.0f64;
    let mut z_prev = DVector::zeros(n);
    for i in 0..3 {
        let ti = t + tab.c[i] * h;
        let mut known = DVector::zeros(n);
        for (j, kj) in k.iter().enumerate() {
            known += kj * (h * tab.a[i][j]);
        }
        let mut z = if i == 0 { DVector::zeros(n) } else { &z_prev * (tab.c[i] / tab.c[i - 1]) };
        let scale = newton_tol * (1.0 + u.norm());
        let mut converged = false;
        let mut last_res = f64::INFINITY;
        for _ in 0..12 {
            let y = u + &z;
            let g = &z - sys.rhs(ti, &y) * hg - &known;
            if g.iter().any(|v| !v.is_finite()) {
                return None;
            }
            let m = &eye - sys.jacobian(ti, &y) * hg;
            let dz = solve(&m, &g)?;
            z -= &dz;
            // residual measured in the norm preconditioned by the Newton
            // matrix; the raw residual carries roundoff of size hγ|∂F|·|u|
            last_res = dz.norm();
            if last_res <= scale {
                converged = true;
                break;
            }
        }
        if !converged {
            return None;
        }
        residual = residual.max(last_res);
        k.push((&z - &known) / hg);
        z_prev = z;
    }
    let u_new = u + &z_prev;
    let mut e = DVector::zeros(n);
    for i in 0..3 {
        e += &k[i] * (h * (tab.b[i] - tab.b_hat[i]));
    }
    let m = &eye - sys.jacobian(t, u) * hg;
    let err = solve(&m, &e).unwrap_or(e);
    Some(StepResult { u: u_new, err, residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tableau_order_conditions() {
        let t = tableau();
        let sb: f64 = t.b.iter().sum();
        let sbc: f64 = t.b.iter().zip(&t.c).map(|(b, c)| b * c).sum();
        let sbcc: f64 = t.b.iter().zip(&t.c).map(|(b, c)| b * c * c).sum();
        let mut sbac = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                sbac += t.b[i] * t.a[i][j] * t.c[j];
            }
        }
        assert!((sb - 1.0).abs() < 1e-15);
        assert!((sbc - 0.5).abs() < 1e-15);
        assert!((sbcc - 1.0 / 3.0).abs() < 1e-14);
        assert!((sbac - 1.0 / 6.0).abs() < 1e-14);
        for i in 0..3 {
            let row: f64 = t.a[i].iter().sum();
            assert!((row - t.c[i]).abs() < 1e-15);
        }
        let sh: f64 = t.b_hat.iter().sum();
        let shc: f64 = t.b_hat.iter().zip(&t.c).map(|(b, c)| b * c).sum();
        assert!((sh - 1.0).abs() < 1e-15 && (shc - 0.5).abs() < 1e-15);
        // L-stability: stability function vanishes at infinity for a
        // stiffly accurate method with nonsingular A
        assert_eq!(t.a[2], t.b);
    }

    struct Linear(f64);
    impl StiffSystem for Linear {
        fn rhs(&self, _: f64, u: &DVector<f64>) -> DVector<f64> {
            u * -self.0
        }
        fn jacobian(&self, _: f64, u: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_element(u.len(), u.len(), -self.0)
        }
    }

    #[test]
    fn third_order_on_linear_decay() {
        let sys = Linear(1.0);
        let u0 = DVector::from_element(1, 1.0);
        let err = |h: f64| (step(&sys, 0.0, &u0, h, 1e-14).unwrap().u[0] - (-h).exp()).abs();
        // local error is O(h⁴)
        let ratio = err(0.1) / err(0.05);
        assert!(ratio > 12.0 && ratio < 20.0, "{ratio}");
        // stiff limit: amplification tends to zero
        let stiff = step(&Linear(1e12), 0.0, &u0, 1.0, 1e-14).unwrap();
        assert!(stiff.u[0].abs() < 1e-10);
    }
}
