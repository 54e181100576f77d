//! Dormand–Prince 5(4) with adaptive steps.

use nalgebra::DVector;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum DopriError {
    #[error("step size underflow at s={s}")]
    StepUnderflow { s: f64 },
    #[error("non-finite state at s={s}")]
    NonFinite { s: f64 },
    #[error("no stop after s={s} (budget exhausted)")]
    Budget { s: f64 },
}

#[derive(Clone, Copy, Debug)]
pub struct Options {
    pub rtol: f64,
    pub atol: f64,
    pub h0: f64,
    pub h_max: f64,
    pub h_min: f64,
    /// Integration stops with [`DopriError::Budget`] beyond `s0 + budget`.
    pub budget: f64,
}

#[derive(Clone, Debug, Default)]
pub struct Solution {
    pub s: Vec<f64>,
    pub y: Vec<DVector<f64>>,
    pub dy: Vec<DVector<f64>>,
    pub accepted: usize,
    pub rejected: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b̂
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates `y' = rhs(s, y)` from `(s0, y0)` until `stop(s, y, y')` holds
/// at an accepted step.
pub fn integrate<F, S>(mut rhs: F, s0: f64, y0: DVector<f64>, opts: Options, mut stop: S) -> Result<Solution, DopriError>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
    S: FnMut(f64, &DVector<f64>, &DVector<f64>) -> bool,
{
    let mut sol = Solution::default();
    let mut s = s0;
    let mut y = y0;
    let mut k1 = rhs(s, &y);
    sol.s.push(s);
    sol.y.push(y.clone());
    sol.dy.push(k1.clone());
    if stop(s, &y, &k1) {
        return Ok(sol);
    }
    let mut h = opts.h0.min(opts.h_max);
    loop {
        if s - s0 > opts.budget {
            return Err(DopriError::Budget { s });
        }
        if h < opts.h_min {
            return Err(DopriError::StepUnderflow { s });
        }
        let k2 = rhs(s + C2 * h, &(&y + &k1 * (h * A21)));
        let k3 = rhs(s + C3 * h, &(&y + (&k1 * A31 + &k2 * A32) * h));
        let k4 = rhs(s + C4 * h, &(&y + (&k1 * A41 + &k2 * A42 + &k3 * A43) * h));
        let k5 = rhs(s + C5 * h, &(&y + (&k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * h));
        let k6 = rhs(s + h, &(&y + (&k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * h));
        let ynew = &y + (&k1 * B1 + &k3 * B3 + &k4 * B4 + &k5 * B5 + &k6 * B6) * h;
        let k7 = rhs(s + h, &ynew);
        let errv = (&k1 * E1 + &k3 * E3 + &k4 * E4 + &k5 * E5 + &k6 * E6 + &k7 * E7) * h;
        let n = y.len() as f64;
        let err = (errv
            .iter()
            .zip(y.iter().zip(ynew.iter()))
            .map(|(e, (a, b))| {
                let sc = opts.atol + opts.rtol * a.abs().max(b.abs());
                (e / sc).powi(2)
            })
            .sum::<f64>()
            / n)
            .sqrt();
        if !err.is_finite() || ynew.iter().any(|v| !v.is_finite()) {
            sol.rejected += 1;
            h *= 0.2;
            if h < opts.h_min {
                return Err(DopriError::NonFinite { s });
            }
            continue;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        if err <= 1.0 {
            s += h;
            y = ynew;
            k1 = k7;
            sol.accepted += 1;
            sol.s.push(s);
            sol.y.push(y.clone());
            sol.dy.push(k1.clone());
            if stop(s, &y, &k1) {
                return Ok(sol);
            }
            h = (h * factor).min(opts.h_max);
        } else {
            sol.rejected += 1;
            h *= factor.min(1.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let opts = Options { rtol: 1e-10, atol: 1e-14, h0: 1e-3, h_max: 1.0, h_min: 1e-14, budget: 10.0 };
        let sol = integrate(|_, y| -y * 2.0, 0.0, DVector::from_element(1, 1.0), opts, |s, _, _| s >= 3.0).unwrap();
        let s = *sol.s.last().unwrap();
        let y = sol.y.last().unwrap()[0];
        assert!((y - (-2.0 * s).exp()).abs() < 1e-10);
    }

    #[test]
    fn budget_is_enforced() {
        let opts = Options { rtol: 1e-8, atol: 1e-12, h0: 1e-2, h_max: 0.5, h_min: 1e-14, budget: 5.0 };
        let r = integrate(|_, y| y * 0.0, 0.0, DVector::from_element(1, 1.0), opts, |_, _, _| false);
        assert!(matches!(r, Err(DopriError::Budget { .. })));
    }
}
