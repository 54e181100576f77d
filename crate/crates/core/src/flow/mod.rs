//! The stiff ε-gradient flow `εu̇ = −∇f(t, u)`, its dissipation identity and
//! the sphere-crossing events used to align it with the fast dynamics.

pub mod sdirk;

use crate::config::Tolerances;
use crate::dense;
use crate::energy::{Energy, Scenario};
use nalgebra::{DMatrix, DVector};
use sdirk::StiffSystem;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum FlowError {
    #[error("ε must be positive and finite, got {0}")]
    BadEps(f64),
    #[error("initial point is not finite")]
    BadInit,
    #[error("step size fell below {h_min:.3e} at t={t:.12} (implicit stage did not converge)")]
    StepUnderflow { t: f64, h_min: f64 },
    #[error("non-finite state at t={t}")]
    NonFinite { t: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    ExitDelta,
    LastEntryDelta,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::ExitDelta => "exit_delta",
            EventKind::LastEntryDelta => "last_entry_delta",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub kind: EventKind,
    pub time: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub newton_failures: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowOptions {
    /// Largest step as a fraction of `T`.
    pub max_step: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions { max_step: 0.01 }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub eps: f64,
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// `u̇ = −∇f/ε` at each accepted state.
    pub derivs: Vec<DVector<f64>>,
    pub deriv_norms: Vec<f64>,
    /// Running `ε∫|u̇|²`.
    pub dissipation: Vec<f64>,
    /// Step that produced each sample (0 for the first).
    pub step_sizes: Vec<f64>,
    pub events: Vec<Event>,
    pub step_stats: StepStats,
    /// Largest stage residual over the accepted steps.
    pub max_residual: f64,
    /// Squared a-priori bound including the slack.
    pub bound_sq: f64,
    /// Samples violating the a-priori bound.
    pub bound_violations: usize,
}

struct EpsFlow<'a> {
    energy: &'a Energy,
    eps: f64,
}

impl StiffSystem for EpsFlow<'_> {
    fn rhs(&self, t: f64, u: &DVector<f64>) -> DVector<f64> {
        self.energy.gradient(t, u) / -self.eps
    }

    fn jacobian(&self, t: f64, u: &DVector<f64>) -> DMatrix<f64> {
        self.energy.hessian(t, u) / -self.eps
    }
}

/// `d/dt |u̇|²` along the flow, using `ü = −(H u̇ + ∇f_t)/ε`.
fn accel(energy: &Energy, eps: f64, t: f64, u: &DVector<f64>, du: &DVector<f64>) -> DVector<f64> {
    -(energy.hessian(t, u) * du + energy.grad_t(t, u)) / eps
}

impl Trajectory {
    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().unwrap()
    }

    /// Cubic Hermite dense output.
    pub fn eval(&self, t: f64) -> DVector<f64> {
        let i = dense::bracket(&self.times, t);
        dense::cubic(
            self.times[i],
            self.times[i + 1],
            &self.states[i],
            &self.states[i + 1],
            &self.derivs[i],
            &self.derivs[i + 1],
            t,
        )
    }

    pub fn record(&mut self, kind: EventKind, time: f64) {
        self.events.push(Event { kind, time });
    }

    /// Total dissipation `ε∫₀ᵀ|u̇|²`.
    pub fn total_dissipation(&self) -> f64 {
        *self.dissipation.last().unwrap()
    }
}

/// Integrates the ε-flow on `[0, T]` from `x_init` with Alexander's SDIRK3.
pub fn integrate_eps_flow(
    scenario: &Scenario,
    eps: f64,
    x_init: &DVector<f64>,
    tol: &Tolerances,
    opts: FlowOptions,
) -> Result<Trajectory, FlowError> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(FlowError::BadEps(eps));
    }
    if x_init.iter().any(|v| !v.is_finite()) || x_init.len() != scenario.dim {
        return Err(FlowError::BadInit);
    }
    let energy = scenario.energy();
    let sys = EpsFlow { energy, eps };
    let horizon = scenario.horizon;
    let h_min = tol.min_step * horizon;
    let h_max = opts.max_step * horizon;
    let rtol = tol.ode_tol;
    let atol = tol.ode_tol;
    let newton_tol = 0.1 * tol.ode_tol;
    let bound_sq = scenario.a_priori_bound_sq(x_init) + tol.bound_slack;

    let mut t = 0.0;
    let mut u = x_init.clone();
    let du = sys.rhs(t, &u);
    let mut traj = Trajectory {
        eps,
        times: vec![t],
        states: vec![u.clone()],
        derivs: vec![du.clone()],
        deriv_norms: vec![du.norm()],
        dissipation: vec![0.0],
        step_sizes: vec![0.0],
        events: Vec::new(),
        step_stats: StepStats::default(),
        max_residual: 0.0,
        bound_sq,
        bound_violations: usize::from(u.norm_squared() > bound_sq),
    };
    let mut g = eps * du.norm_squared();
    let mut dg = 2.0 * eps * du.dot(&accel(energy, eps, t, &u, &du));
    let mut h = (1e-2 * eps).min(h_max);
    while t < horizon {
        let last = t + h >= horizon * (1.0 - 1e-14);
        let step = if last { horizon - t } else { h };
        if step < h_min {
            return Err(FlowError::StepUnderflow { t, h_min });
        }
        let Some(res) = sdirk::step(&sys, t, &u, step, newton_tol) else {
            traj.step_stats.newton_failures += 1;
            traj.step_stats.rejected += 1;
            h = 0.5 * step;
            continue;
        };
        let err = (res
            .err
            .iter()
            .zip(u.iter().zip(res.u.iter()))
            .map(|(e, (a, b))| (e / (atol + rtol * a.abs().max(b.abs()))).powi(2))
            .sum::<f64>()
            / u.len() as f64)
            .sqrt();
        if !err.is_finite() {
            traj.step_stats.rejected += 1;
            h = 0.2 * step;
            if h < h_min {
                return Err(FlowError::NonFinite { t });
            }
            continue;
        }
        let factor = if err == 0.0 { 4.0 } else { (0.9 * err.powf(-1.0 / 3.0)).clamp(0.2, 4.0) };
        if err > 1.0 {
            traj.step_stats.rejected += 1;
            h = step * factor;
            continue;
        }
        let t_new = if last { horizon } else { t + step };
        let u_new = res.u;
        if u_new.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::NonFinite { t: t_new });
        }
        let du_new = sys.rhs(t_new, &u_new);
        let g_new = eps * du_new.norm_squared();
        let dg_new = 2.0 * eps * du_new.dot(&accel(energy, eps, t_new, &u_new, &du_new));
        let running = traj.total_dissipation() + 0.5 * step * (g + g_new) + step * step / 12.0 * (dg - dg_new);
        traj.step_stats.accepted += 1;
        traj.max_residual = traj.max_residual.max(res.residual);
        if u_new.norm_squared() > bound_sq {
            traj.bound_violations += 1;
        }
        traj.times.push(t_new);
        traj.states.push(u_new.clone());
        traj.deriv_norms.push(du_new.norm());
        traj.derivs.push(du_new.clone());
        traj.dissipation.push(running);
        traj.step_sizes.push(step);
        t = t_new;
        u = u_new;
        g = g_new;
        dg = dg_new;
        h = (step * factor).min(h_max);
    }
    Ok(traj)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DissipationReport {
    /// `ε∫|u̇|²`.
    pub lhs: f64,
    /// `f(0, u(0)) − f(T, u(T)) + ∫f_t`.
    pub rhs: f64,
    pub residual: f64,
}

/// Energy balance `ε∫|u̇|² = f(0,u(0)) − f(T,u(T)) + ∫f_t(t,u)dt` evaluated
/// with the endpoint-corrected trapezoid rule on the accepted grid.
pub fn dissipation_identity_residual(scenario: &Scenario, traj: &Trajectory) -> DissipationReport {
    let energy = scenario.energy();
    let mut power = 0.0;
    let ft = |i: usize| {
        let (t, u, du) = (traj.times[i], &traj.states[i], &traj.derivs[i]);
        (energy.f_t(t, u), energy.f_tt(t, u) + energy.grad_t(t, u).dot(du))
    };
    let (mut p0, mut dp0) = ft(0);
    for i in 1..traj.times.len() {
        let h = traj.times[i] - traj.times[i - 1];
        let (p1, dp1) = ft(i);
        power += 0.5 * h * (p0 + p1) + h * h / 12.0 * (dp0 - dp1);
        p0 = p1;
        dp0 = dp1;
    }
    let lhs = traj.total_dissipation();
    let rhs = energy.value(0.0, &traj.states[0]) - energy.value(traj.horizon(), traj.final_state()) + power;
    DissipationReport { lhs, rhs, residual: lhs - rhs }
}

fn bisect<F: Fn(f64) -> f64>(phi: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    // phi(lo) < 0 <= phi(hi) or the reverse; returns the endpoint on the
    // far side of the sign change from `lo`
    let s_lo = phi(lo) < 0.0;
    while (hi - lo).abs() > tol {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if (phi(mid) < 0.0) == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// First time after `tau1` at which the trajectory leaves `B(x1, delta)`.
pub fn exit_time(traj: &Trajectory, x1: &DVector<f64>, delta: f64, tau1: f64, tol: &Tolerances) -> Option<f64> {
    let phi = |t: f64| (traj.eval(t) - x1).norm() - delta;
    if phi(tau1) >= 0.0 {
        return None;
    }
    let event_tol = tol.event_tol * traj.horizon();
    let start = traj.times.partition_point(|&t| t <= tau1);
    let mut prev = tau1;
    for i in start..traj.times.len() {
        if (&traj.states[i] - x1).norm() >= delta {
            return Some(bisect(phi, prev, traj.times[i], event_tol));
        }
        prev = traj.times[i];
    }
    None
}

/// Last time before `t_exit` at which the trajectory was within
/// `delta_k` of `x1`, i.e. on the sphere `∂B(x1, delta_k)`.
pub fn last_entry_time(traj: &Trajectory, x1: &DVector<f64>, delta_k: f64, t_exit: f64, tol: &Tolerances) -> Option<f64> {
    let phi = |t: f64| (traj.eval(t) - x1).norm() - delta_k;
    let event_tol = tol.event_tol * traj.horizon();
    // on the sphere up to the radial error of a located event
    let i = dense::bracket(&traj.times, t_exit);
    let speed = traj.deriv_norms[i].max(traj.deriv_norms[i + 1]);
    if phi(t_exit).abs() <= 4.0 * speed * event_tol + 1e-14 {
        return Some(t_exit);
    }
    let end = traj.times.partition_point(|&t| t < t_exit);
    let mut next = t_exit;
    for i in (0..end).rev() {
        if (&traj.states[i] - x1).norm() <= delta_k {
            return Some(bisect(phi, next, traj.times[i], event_tol));
        }
        next = traj.times[i];
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn quadratic_decays_exponentially() {
        let s = Scenario::builtin("quadratic").unwrap();
        let tol = Tolerances::default();
        let tr = integrate_eps_flow(&s, 0.1, &v(&[1.0]), &tol, FlowOptions::default()).unwrap();
        assert!((tr.eval(0.2)[0] - (-2f64).exp()).abs() < 1e-6);
        for k in 1..=10 {
            let t = k as f64 / 10.0;
            assert!((tr.eval(t)[0] - (-t / 0.1).exp()).abs() < 1e-6, "t={t}");
        }
        let d = dissipation_identity_residual(&s, &tr);
        let exact = (1.0 - (-20f64).exp()) / 2.0;
        assert!((d.lhs - exact).abs() < 1e-6 && (d.rhs - exact).abs() < 1e-6);
        assert!(d.residual.abs() < 1e-6);
        assert!(tr.max_residual <= tol.ode_tol);
        assert_eq!(tr.bound_violations, 0);
    }

    #[test]
    fn tracking_lags_by_eps() {
        let s = Scenario::builtin("tracking").unwrap();
        let tol = Tolerances::default();
        let eps = 1e-2;
        let tr = integrate_eps_flow(&s, eps, &v(&[0.0, 0.0]), &tol, FlowOptions::default()).unwrap();
        for t in [0.3, 0.6, 1.0] {
            let exact = t - eps + eps * (-t / eps).exp();
            let x = tr.eval(t);
            assert!((x[0] - exact).abs() < 1e-7);
            assert!(((t - x[0]) / eps - 1.0).abs() < 0.05);
        }
        assert!(dissipation_identity_residual(&s, &tr).residual.abs() < 1e-6);
    }

    #[test]
    fn stationary_start_has_no_dissipation() {
        let s = Scenario::builtin("quadratic").unwrap();
        let tr = integrate_eps_flow(&s, 1e-3, &v(&[0.0]), &Tolerances::default(), FlowOptions::default()).unwrap();
        let d = dissipation_identity_residual(&s, &tr);
        assert_eq!((d.lhs, d.rhs), (0.0, 0.0));
        // large steps on the equilibrium
        assert!(tr.times.len() < 200);
    }

    #[test]
    fn dwell_exit_and_entry() {
        let s = Scenario::builtin("dwell").unwrap();
        let tol = Tolerances::default();
        let tr = integrate_eps_flow(&s, 1e-3, &v(&[-1.0]), &tol, FlowOptions::default()).unwrap();
        let t1 = 2.0 / (3.0 * 3f64.sqrt());
        let x1 = v(&[-1.0 / 3f64.sqrt()]);
        let te = exit_time(&tr, &x1, 0.1, t1 - 0.005, &tol).unwrap();
        assert!((te - t1).abs() < 0.02, "{te}");
        assert!(((tr.eval(te) - &x1).norm() - 0.1).abs() < 1e-9);
        let tl = last_entry_time(&tr, &x1, 0.05, te, &tol).unwrap();
        assert!(tl < te);
        assert!(((tr.eval(tl) - &x1).norm() - 0.05).abs() < 1e-9);
        assert_eq!(last_entry_time(&tr, &x1, 0.1, te, &tol), Some(te));
        // final state near the upper branch
        let y = tr.final_state()[0];
        assert!((y * y * y - y - 0.6).abs() < 1e-2);
        assert_eq!(tr.bound_violations, 0);
    }

    #[test]
    fn quadratic_never_exits_again() {
        let s = Scenario::builtin("quadratic").unwrap();
        let tol = Tolerances::default();
        let tr = integrate_eps_flow(&s, 0.1, &v(&[1.0]), &tol, FlowOptions::default()).unwrap();
        assert_eq!(exit_time(&tr, &v(&[0.0]), 0.5, 0.2, &tol), None);
    }

    #[test]
    fn rejects_bad_input() {
        let s = Scenario::builtin("quadratic").unwrap();
        let tol = Tolerances::default();
        assert!(matches!(
            integrate_eps_flow(&s, 0.0, &v(&[1.0]), &tol, FlowOptions::default()),
            Err(FlowError::BadEps(_))
        ));
        assert!(matches!(
            integrate_eps_flow(&s, 0.1, &v(&[f64::NAN]), &tol, FlowOptions::default()),
            Err(FlowError::BadInit)
        ));
    }
}
