//! Frozen-time gradient dynamics `v̇ = −∇f(τ, v)`: heteroclinic orbits
//! leaving a fold, ω-limits and the landing check.

pub mod dopri;

use crate::config::Tolerances;
use crate::critical::{classify, find_critical_points, newton_critical, CriticalPoint, FoldPoint, PointClass};
use crate::dense;
use crate::energy::{Energy, Scenario};
use crate::linalg::{jacobi_eigen, solve};
use nalgebra::DVector;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum FastError {
    #[error("departure test ambiguous at the fold (descent rates {plus:.3e} and {minus:.3e})")]
    Ambiguous { plus: f64, minus: f64 },
    #[error("no other critical point of f({t}, ·) found")]
    Isolated { t: f64 },
    #[error("integration did not land within the budget (stopped at s={s})")]
    Budget { s: f64 },
    #[error("orbit lands on a degenerate critical point {x:?}")]
    DegenerateLanding { x: Vec<f64> },
    #[error("landing point could not be polished from {x:?}")]
    Polish { x: Vec<f64> },
    #[error("fast integration failed: {0}")]
    Integration(#[from] dopri::DopriError),
    #[error("orbit never leaves B(ξ, {delta})")]
    NoExit { delta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Phase {
    /// `s = 0` at the seed.
    Seed,
    /// `s = 0` at the first crossing of `∂B(ξ, δ)`.
    FirstCrossing { delta: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HetOptions {
    /// Move the seed onto the quadratic approximation of the center manifold.
    pub seed_correction: bool,
}

#[derive(Clone, Debug)]
pub struct Heteroclinic {
    pub tau: f64,
    pub xi: DVector<f64>,
    /// Unit departure direction, `σℓ`.
    pub ell: DVector<f64>,
    pub sigma: f64,
    /// `|c|`, the cubic coefficient along `ℓ`.
    pub c_abs: f64,
    /// Distance from `ξ` to the nearest other critical point of `f(τ, ·)`.
    pub lambda_dist: f64,
    pub h0: f64,
    /// Transverse seed correction at offset `h0` (zero when disabled).
    pub seed_shift: DVector<f64>,
    pub s: Vec<f64>,
    pub v: Vec<DVector<f64>>,
    pub dv: Vec<DVector<f64>>,
    pub ddv: Vec<DVector<f64>>,
    /// Leading samples taken from the analytic departure tail.
    pub prefix_len: usize,
    /// First integrated time; below it the analytic tail is used.
    pub s_seed: f64,
    pub w_inf: DVector<f64>,
    pub landing: CriticalPoint,
    pub phase: Phase,
    pub delta_anchor: f64,
    pub accepted: usize,
    pub rejected: usize,
}

impl Heteroclinic {
    pub fn s_min(&self) -> f64 {
        self.s[0]
    }

    pub fn s_max(&self) -> f64 {
        *self.s.last().unwrap()
    }

    fn analytic(&self, s: f64) -> DVector<f64> {
        let a = 1.0 / (1.0 / self.h0 + 0.5 * self.c_abs * (self.s_seed - s));
        let r = a / self.h0;
        &self.xi + &self.ell * a + &self.seed_shift * (r * r)
    }

    /// Dense evaluation of the orbit; analytic tail before the seed,
    /// linearized decay past the last sample.
    pub fn eval(&self, s: f64) -> DVector<f64> {
        if s < self.s_seed {
            return self.analytic(s);
        }
        let last = self.s.len() - 1;
        if s >= self.s[last] {
            let rate = self.landing.lambda_min().max(0.0);
            return &self.w_inf + (&self.v[last] - &self.w_inf) * (-(rate * (s - self.s[last]))).exp();
        }
        let grid = &self.s[self.prefix_len..];
        let i = self.prefix_len + dense::bracket(grid, s);
        dense::quintic(
            self.s[i],
            self.s[i + 1],
            &self.v[i],
            &self.v[i + 1],
            &self.dv[i],
            &self.dv[i + 1],
            &self.ddv[i],
            &self.ddv[i + 1],
            s,
        )
    }

    fn shifted(&self, by: f64) -> Heteroclinic {
        let mut h = self.clone();
        for s in &mut h.s {
            *s -= by;
        }
        h.s_seed -= by;
        h
    }

    /// Energy along the stored samples.
    pub fn energies(&self, energy: &Energy) -> Vec<f64> {
        self.v.iter().map(|v| energy.value(self.tau, v)).collect()
    }
}

fn second_derivative(energy: &Energy, tau: f64, v: &DVector<f64>, dv: &DVector<f64>) -> DVector<f64> {
    -(energy.hessian(tau, v) * dv)
}

/// Distance from `xi` to the nearest other critical point of `f(t, ·)`.
pub fn nearest_other_critical(scenario: &Scenario, t: f64, xi: &DVector<f64>, tol: &Tolerances) -> Option<f64> {
    find_critical_points(scenario, t, tol)
        .iter()
        .map(|p| (&p.x - xi).norm())
        .filter(|&d| d > 1e-3)
        .min_by(f64::total_cmp)
}

/// Sign `σ` such that descent from `ξ + σhℓ` moves away from `ξ`.
pub fn departure_sign(energy: &Energy, fold: &FoldPoint, h: f64) -> Result<f64, FastError> {
    let plus = -energy.gradient(fold.t, &(&fold.x + &fold.ell * h)).dot(&fold.ell);
    let minus = energy.gradient(fold.t, &(&fold.x - &fold.ell * h)).dot(&fold.ell);
    match (plus > 0.0, minus > 0.0) {
        (true, false) => Ok(1.0),
        (false, true) => Ok(-1.0),
        _ => Err(FastError::Ambiguous { plus, minus }),
    }
}

/// Quadratic center-manifold correction at offset `h` along the unit
/// direction `ell`, orthogonal to `ell`.
fn center_manifold_shift(energy: &Energy, fold: &FoldPoint, ell: &DVector<f64>, h: f64) -> DVector<f64> {
    let n = ell.len();
    let w = energy.third_contract(fold.t, &fold.x, ell) * ell;
    let w_perp = &w - ell * ell.dot(&w);
    let a = energy.hessian(fold.t, &fold.x) + ell * ell.transpose();
    solve(&a, &(-w_perp * (0.5 * h * h))).unwrap_or_else(|| DVector::zeros(n))
}

fn polish(energy: &Energy, t: f64, x: &DVector<f64>, tol: &Tolerances) -> Option<DVector<f64>> {
    newton_critical(energy, t, x, tol, 50)
}

/// Integrates the frozen-time flow from `x0` until it settles, and returns
/// the polished equilibrium.
pub fn omega_limit(scenario: &Scenario, t: f64, x0: &DVector<f64>, tol: &Tolerances) -> Result<CriticalPoint, FastError> {
    let energy = scenario.energy();
    let grad_stop = tol.land_grad_tol * tol.scale;
    if energy.gradient(t, x0).norm() <= tol.newton_tol * tol.scale {
        return Ok(classify(energy, t, x0.clone(), tol));
    }
    let opts = dopri::Options {
        rtol: tol.fast_ode_tol,
        atol: tol.fast_ode_tol * 1e-2,
        h0: 1e-3,
        h_max: f64::INFINITY,
        h_min: 1e-14,
        budget: tol.s_budget,
    };
    let sol = dopri::integrate(|_, v| -energy.gradient(t, v), 0.0, x0.clone(), opts, |_, _, dv| dv.norm() < grad_stop)
        .map_err(|e| match e {
            dopri::DopriError::Budget { s } => FastError::Budget { s },
            other => FastError::Integration(other),
        })?;
    let last = sol.y.last().unwrap();
    let x = polish(energy, t, last, tol).ok_or_else(|| FastError::Polish { x: last.as_slice().to_vec() })?;
    Ok(classify(energy, t, x, tol))
}

/// The orbit of `v̇ = −∇f(τ, v)` leaving the fold, phase-fixed at the first
/// crossing of `∂B(ξ, δ)` with `δ = delta_anchor · min(Λ, |w∞ − ξ|)`.
pub fn heteroclinic_from_fold(
    scenario: &Scenario,
    fold: &FoldPoint,
    tol: &Tolerances,
    opts: HetOptions,
) -> Result<Heteroclinic, FastError> {
    let energy = scenario.energy();
    let tau = fold.t;
    let lambda_dist =
        nearest_other_critical(scenario, tau, &fold.x, tol).ok_or(FastError::Isolated { t: tau })?;
    let h0 = tol.seed_offset * lambda_dist;
    let sigma = departure_sign(energy, fold, h0)?;
    let ell = &fold.ell * sigma;
    let c_abs = energy.third_form(tau, &fold.x, &ell).abs();
    let seed_shift = if opts.seed_correction {
        center_manifold_shift(energy, fold, &ell, h0)
    } else {
        DVector::zeros(scenario.dim)
    };
    let seed = &fold.x + &ell * h0 + &seed_shift;

    let grad_stop = tol.land_grad_tol * tol.scale;
    let away = 0.5 * lambda_dist;
    let dopts = dopri::Options {
        rtol: tol.fast_ode_tol,
        atol: tol.fast_ode_tol * 1e-2,
        h0: 1e-2 / (c_abs * h0).max(1e-12),
        h_max: f64::INFINITY,
        h_min: 1e-14,
        budget: tol.s_budget,
    };
    let xi = fold.x.clone();
    let sol = dopri::integrate(
        |_, v| -energy.gradient(tau, v),
        0.0,
        seed,
        dopts,
        |_, v, dv| dv.norm() < grad_stop && (v - &xi).norm() > away,
    )
    .map_err(|e| match e {
        dopri::DopriError::Budget { s } => FastError::Budget { s },
        other => FastError::Integration(other),
    })?;

    let last = sol.y.last().unwrap();
    let w_inf = polish(energy, tau, last, tol).ok_or_else(|| FastError::Polish { x: last.as_slice().to_vec() })?;
    let landing = classify(energy, tau, w_inf.clone(), tol);
    if landing.class == PointClass::Degenerate {
        return Err(FastError::DegenerateLanding { x: w_inf.as_slice().to_vec() });
    }

    // analytic departure tail from depart_tol up to the seed
    let k = 24;
    let a_min = tol.depart_tol.min(h0);
    let mut s = Vec::new();
    let mut v = Vec::new();
    let mut dv = Vec::new();
    let mut ddv = Vec::new();
    let mut het = Heteroclinic {
        tau,
        xi: fold.x.clone(),
        ell,
        sigma,
        c_abs,
        lambda_dist,
        h0,
        seed_shift,
        s: Vec::new(),
        v: Vec::new(),
        dv: Vec::new(),
        ddv: Vec::new(),
        prefix_len: 0,
        s_seed: 0.0,
        w_inf,
        landing,
        phase: Phase::Seed,
        delta_anchor: 0.0,
        accepted: sol.accepted,
        rejected: sol.rejected,
    };
    if a_min < h0 {
        for i in 0..k {
            let a = a_min * (h0 / a_min).powf(i as f64 / k as f64);
            let si = -(1.0 / a - 1.0 / h0) * 2.0 / c_abs;
            let vi = het.analytic(si);
            let di = -energy.gradient(tau, &vi);
            ddv.push(second_derivative(energy, tau, &vi, &di));
            s.push(si);
            v.push(vi);
            dv.push(di);
        }
    }
    het.prefix_len = s.len();
    for ((si, vi), di) in sol.s.into_iter().zip(sol.y).zip(sol.dy) {
        ddv.push(second_derivative(energy, tau, &vi, &di));
        s.push(si);
        v.push(vi);
        dv.push(di);
    }
    het.s = s;
    het.v = v;
    het.dv = dv;
    het.ddv = ddv;

    let delta = tol.delta_anchor * lambda_dist.min((&het.w_inf - &het.xi).norm());
    canonical_phase(&het, delta)
}

/// Time-shifts the orbit so that `s = 0` is its first crossing of
/// `∂B(ξ, δ)`.
pub fn canonical_phase(het: &Heteroclinic, delta: f64) -> Result<Heteroclinic, FastError> {
    let dist = |s: f64| (het.eval(s) - &het.xi).norm() - delta;
    let i = het
        .v
        .iter()
        .position(|v| (v - &het.xi).norm() >= delta)
        .ok_or(FastError::NoExit { delta })?;
    let crossing = if i == 0 {
        het.s[0]
    } else {
        let (mut lo, mut hi) = (het.s[i - 1], het.s[i]);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if dist(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    let mut out = het.shifted(crossing);
    out.phase = Phase::FirstCrossing { delta };
    out.delta_anchor = delta;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hp4Report {
    pub lambda_min: f64,
    pub eigvals: Vec<f64>,
    pub pass: bool,
}

/// Positive definiteness of the Hessian at the landing point.
pub fn check_hp4(scenario: &Scenario, het: &Heteroclinic, tol: &Tolerances) -> Hp4Report {
    let eig = jacobi_eigen(&scenario.energy().hessian(het.tau, &het.w_inf));
    let thr = crate::critical::degeneracy_threshold(&eig, tol);
    Hp4Report { lambda_min: eig.min(), eigvals: eig.values.iter().cloned().collect(), pass: eig.min() > thr }
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Log-log slope of `|v(−s) − ξ|` against `s` over `[s_lo, s_hi]`.
pub fn backward_tail_slope(het: &Heteroclinic, s_lo: f64, s_hi: f64) -> f64 {
    let m = 64;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for i in 0..=m {
        let s = s_lo * (s_hi / s_lo).powf(i as f64 / m as f64);
        xs.push(s.ln());
        ys.push((het.eval(-s) - &het.xi).norm().ln());
    }
    slope(&xs, &ys)
}

/// Exponential decay rate of `|v(s) − w∞|` fitted on samples with distance
/// in `[lo, hi]`.
pub fn forward_tail_rate(het: &Heteroclinic, lo: f64, hi: f64) -> Option<f64> {
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (s, v) in het.s.iter().zip(&het.v) {
        let d = (v - &het.w_inf).norm();
        if d >= lo && d <= hi && *s > 0.0 {
            xs.push(*s);
            ys.push(d.ln());
        }
    }
    (xs.len() >= 3).then(|| -slope(&xs, &ys))
}

/// `∫|v̇|² ds` over the sampled window and `f(τ, v(s_min)) − f(τ, w∞)`.
pub fn dissipation_balance(energy: &Energy, het: &Heteroclinic) -> (f64, f64) {
    let mut integral = 0.0;
    for i in 0..het.s.len() - 1 {
        let h = het.s[i + 1] - het.s[i];
        let g0 = het.dv[i].norm_squared();
        let g1 = het.dv[i + 1].norm_squared();
        let dg0 = 2.0 * het.dv[i].dot(&het.ddv[i]);
        let dg1 = 2.0 * het.dv[i + 1].dot(&het.ddv[i + 1]);
        integral += 0.5 * h * (g0 + g1) + h * h / 12.0 * (dg0 - dg1);
    }
    let drop = energy.value(het.tau, &het.v[0]) - energy.value(het.tau, &het.w_inf);
    (integral, drop)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critical::refine_fold;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn dwell_fold(s: &Scenario, tol: &Tolerances) -> FoldPoint {
        let g = if s.dim == 1 { v(&[-0.58]) } else { v(&[-0.58, 0.0]) };
        refine_fold(s, 0.38, &g, None, tol).unwrap()
    }

    #[test]
    fn dwell_heteroclinic_lands_on_the_far_root() {
        let s = Scenario::builtin("dwell").unwrap();
        let tol = Tolerances::default();
        let fold = dwell_fold(&s, &tol);
        let het = heteroclinic_from_fold(&s, &fold, &tol, HetOptions::default()).unwrap();
        assert!((het.w_inf[0] - 2.0 / 3f64.sqrt()).abs() < 1e-8);
        assert_eq!(het.ell[0], 1.0);
        assert!((&het.v[0] - &het.xi).norm() <= tol.depart_tol * (1.0 + 1e-9));
        assert!((het.v.last().unwrap() - &het.w_inf).norm() <= 1e-7);
        let hp4 = check_hp4(&s, &het, &tol);
        assert!(hp4.pass);
        assert!((hp4.lambda_min - 3.0).abs() < 1e-7);
    }

    #[test]
    fn phase_anchor_is_first_crossing() {
        let s = Scenario::builtin("dwell").unwrap();
        let tol = Tolerances::default();
        let het = heteroclinic_from_fold(&s, &dwell_fold(&s, &tol), &tol, HetOptions::default()).unwrap();
        let h = canonical_phase(&het, 0.1).unwrap();
        assert!(((h.eval(0.0) - &h.xi).norm() - 0.1).abs() < 1e-10);
        for (sv, x) in h.s.iter().zip(&h.v) {
            if *sv < 0.0 {
                assert!((x - &h.xi).norm() < 0.1);
            }
        }
        let again = canonical_phase(&h, 0.1).unwrap();
        assert!((again.s[5] - h.s[5]).abs() < 1e-9);
        // monotone first component
        assert!(h.v.windows(2).all(|w| w[1][0] >= w[0][0]));
    }

    #[test]
    fn dwell2d_stays_in_invariant_line() {
        let s = Scenario::builtin("dwell2d").unwrap();
        let tol = Tolerances::default();
        let het = heteroclinic_from_fold(&s, &dwell_fold(&s, &tol), &tol, HetOptions::default()).unwrap();
        assert!(het.v.iter().all(|x| x[1].abs() <= 1e-10));
        let hp4 = check_hp4(&s, &het, &tol);
        assert!((hp4.eigvals[0] - 1.0).abs() < 1e-7 && (hp4.eigvals[1] - 3.0).abs() < 1e-7);
    }

    #[test]
    fn departure_sign_follows_cubic() {
        let s = Scenario::builtin("dwell").unwrap();
        let tol = Tolerances::default();
        let fold = dwell_fold(&s, &tol);
        let sg = departure_sign(s.energy(), &fold, 1e-4).unwrap();
        assert_eq!(sg * fold.ell[0], 1.0);
        assert_eq!(departure_sign(s.energy(), &fold.flipped(), 1e-4).unwrap(), -sg);
    }

    #[test]
    fn omega_limits() {
        let s = Scenario::builtin("dwell").unwrap();
        let tol = Tolerances::default();
        let r = omega_limit(&s, 0.0, &v(&[0.5]), &tol).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-10);
        let l = omega_limit(&s, 0.0, &v(&[-0.5]), &tol).unwrap();
        assert!((l.x[0] + 1.0).abs() < 1e-10);
        let fixed = omega_limit(&s, 0.0, &v(&[-1.0]), &tol).unwrap();
        assert_eq!(fixed.x[0], -1.0);
    }

    #[test]
    fn saddle_landing_lands_on_a_saddle() {
        let s = Scenario::builtin("saddle_landing").unwrap();
        let tol = Tolerances::default();
        let fold = refine_fold(&s, 0.38, &v(&[-0.58, 0.0]), None, &tol).unwrap();
        let het = heteroclinic_from_fold(&s, &fold, &tol, HetOptions::default()).unwrap();
        assert!((het.w_inf[0] - 2.0 / 3f64.sqrt()).abs() < 1e-8);
        let hp4 = check_hp4(&s, &het, &tol);
        assert!(!hp4.pass && hp4.lambda_min < 0.0);
    }

    #[test]
    fn seed_correction_is_transverse() {
        let s = Scenario::from_text(
            "name = skew\nn = 2\nT = 0.6\nf = x1^4/4 - x1^2/2 - t*x1 + (x2 - x1^2/2)^2/2\nc0 = 0.5\na0 = 4\ny0 = -1, 0.5\neps = 0.01\n",
        )
        .unwrap();
        let tol = Tolerances::default();
        let x1 = -1.0 / 3f64.sqrt();
        let fold = refine_fold(&s, 0.38, &v(&[x1 + 0.01, x1 * x1 / 2.0]), None, &tol).unwrap();
        let a = heteroclinic_from_fold(&s, &fold, &tol, HetOptions { seed_correction: true }).unwrap();
        assert!(a.seed_shift.dot(&a.ell).abs() < 1e-15);
        let b = heteroclinic_from_fold(&s, &fold, &tol, HetOptions::default()).unwrap();
        assert!((&a.w_inf - &b.w_inf).norm() < 1e-8);
    }
}
