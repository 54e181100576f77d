//! Convergence metrics of an ε-flow trajectory against the limit evolution,
//! and log-log order fits across an ε ladder.

use crate::config::Tolerances;
use crate::energy::Scenario;
use crate::evolution::{PiecewiseEvolution, Polyline};
use crate::fast::{canonical_phase, FastError, Heteroclinic};
use crate::flow::{exit_time, Trajectory};
use crate::slow::SlowError;
use nalgebra::DVector;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum VerifyError {
    #[error("η={eta} is too large: exclusion windows around jump times overlap")]
    EtaTooLarge { eta: f64 },
    #[error("limit evolution could not be evaluated: {0}")]
    Slow(#[from] SlowError),
    #[error("heteroclinic could not be re-anchored: {0}")]
    Fast(#[from] FastError),
    #[error("window [{s_lo}, {s_hi}] is empty")]
    EmptyWindow { s_lo: f64, s_hi: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerifyOptions {
    /// Exclusion half-width around jump times.
    pub eta: f64,
    /// Fast-time window of the rescaled comparison.
    pub window: (f64, f64),
    /// Weight of the time coordinate in the graph metric.
    pub time_weight: f64,
}

impl VerifyOptions {
    pub fn from_tolerances(scenario: &Scenario, tol: &Tolerances) -> VerifyOptions {
        VerifyOptions { eta: tol.eta * scenario.horizon, window: (-5.0, 30.0), time_weight: 1.0 }
    }
}

/// Maximum of `|u_ε(t) − u(t)|` over `[0, T]` minus `η`-neighborhoods of
/// the jump times, on the union of both grids refined by midpoints.
pub fn sup_error_off_jumps(
    scenario: &Scenario,
    traj: &Trajectory,
    pe: &PiecewiseEvolution,
    eta: f64,
    tol: &Tolerances,
) -> Result<f64, VerifyError> {
    let jumps = pe.jump_times();
    if jumps.windows(2).any(|w| w[1] - w[0] <= 2.0 * eta) {
        return Err(VerifyError::EtaTooLarge { eta });
    }
    let mut grid: Vec<f64> = traj.times.clone();
    for b in &pe.branches {
        grid.extend(&b.t);
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut points = Vec::with_capacity(2 * grid.len());
    for w in grid.windows(2) {
        points.push(w[0]);
        points.push(0.5 * (w[0] + w[1]));
    }
    points.push(*grid.last().unwrap());
    let mut worst = 0.0f64;
    for t in points {
        if jumps.iter().any(|&tj| (t - tj).abs() < eta) {
            continue;
        }
        let u = pe.eval_u(scenario, t, tol)?;
        worst = worst.max((traj.eval(t) - u).norm());
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RescaledError {
    pub t_eps: f64,
    pub sup_err: f64,
    /// Effective window after clipping to `[0, T]`.
    pub window: (f64, f64),
    pub clipped: bool,
}

/// First sample in `[lo, hi]` inside `B(x, delta)`.
pub fn first_entry(traj: &Trajectory, x: &DVector<f64>, delta: f64, lo: f64, hi: f64) -> Option<f64> {
    traj.times
        .iter()
        .zip(&traj.states)
        .find(|(t, u)| **t >= lo && **t <= hi && (*u - x).norm() < delta)
        .map(|(t, _)| *t)
}

/// Aligns `u_ε` to the heteroclinic at the first exit from `B(ξ, δ)` and
/// returns `sup |u_ε(t_ε + εs) − v(s)|` over the window, sampled at
/// `Δs = 0.01·(s_hi − s_lo)`. `tau1` must lie inside the ball.
pub fn rescaled_error(
    traj: &Trajectory,
    het: &Heteroclinic,
    window: (f64, f64),
    delta: f64,
    tau1: f64,
    tol: &Tolerances,
) -> Result<Option<RescaledError>, VerifyError> {
    let (s_lo, s_hi) = window;
    if !(s_hi > s_lo) {
        return Err(VerifyError::EmptyWindow { s_lo, s_hi });
    }
    let anchored;
    let het = if het.delta_anchor == delta {
        het
    } else {
        anchored = canonical_phase(het, delta)?;
        &anchored
    };
    let Some(t_eps) = exit_time(traj, &het.xi, delta, tau1, tol) else {
        return Ok(None);
    };
    let eps = traj.eps;
    let horizon = traj.horizon();
    let lo = s_lo.max(-t_eps / eps);
    let hi = s_hi.min((horizon - t_eps) / eps);
    let clipped = lo > s_lo || hi < s_hi;
    let ds = 0.01 * (s_hi - s_lo);
    let mut sup_err = 0.0f64;
    let mut k = 0;
    loop {
        let s = s_lo + k as f64 * ds;
        if s > s_hi + 1e-9 * ds {
            break;
        }
        k += 1;
        if s < lo || s > hi {
            continue;
        }
        sup_err = sup_err.max((traj.eval(t_eps + eps * s) - het.eval(s)).norm());
    }
    Ok(Some(RescaledError { t_eps, sup_err, window: (lo, hi), clipped }))
}

fn segment_distance(p: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let s = if len2 == 0.0 { 0.0 } else { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) };
    (p - (a + ab * s)).norm()
}

fn lift(t: f64, x: &DVector<f64>, w: f64) -> DVector<f64> {
    let mut out = DVector::zeros(x.len() + 1);
    out[0] = w * t;
    out.rows_mut(1, x.len()).copy_from(x);
    out
}

/// One-sided distance `max_t dist((t, u_ε(t)), G)` with `G` the graph of `u`
/// together with the jump segments `{t_i} × γ_i`, discretized as polylines
/// in `ℝ^{1+n}`. With `include_jumps = false` only the branch graphs are
/// used.
pub fn graph_distance(
    scenario: &Scenario,
    traj: &Trajectory,
    pe: &PiecewiseEvolution,
    tol: &Tolerances,
    time_weight: f64,
    include_jumps: bool,
) -> f64 {
    let (branches, jumps) = pe.graph(scenario, tol, 1e-3 * pe.horizon);
    let mut lines: Vec<&Polyline> = branches.iter().collect();
    if include_jumps {
        lines.extend(jumps.iter());
    }
    let segments: Vec<(DVector<f64>, DVector<f64>)> = lines
        .iter()
        .flat_map(|pl| {
            let pts: Vec<DVector<f64>> = pl.t.iter().zip(&pl.x).map(|(t, x)| lift(*t, x, time_weight)).collect();
            if pts.len() == 1 {
                vec![(pts[0].clone(), pts[0].clone())]
            } else {
                pts.windows(2).map(|w| (w[0].clone(), w[1].clone())).collect()
            }
        })
        .collect();
    traj.times
        .iter()
        .zip(&traj.states)
        .map(|(t, u)| {
            let p = lift(*t, u, time_weight);
            segments.iter().map(|(a, b)| segment_distance(&p, a, b)).fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

fn max_or_nan(xs: &[f64]) -> f64 {
    if xs.iter().any(|x| x.is_nan()) {
        f64::NAN
    } else {
        xs.iter().cloned().fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub eps: f64,
    pub sup_err_off_jumps: f64,
    /// Per jump; `NaN` when the trajectory does not cross the anchor
    /// sphere of that jump (large ε).
    pub rescaled_err: Vec<f64>,
    pub graph_dist: f64,
    pub t_eps: Vec<f64>,
    /// `|t_ε^i − t_i|`.
    pub t_gap: Vec<f64>,
    pub clipped: Vec<bool>,
    pub dissipation: f64,
    pub bound_violations: usize,
}

impl ConvergenceReport {
    pub fn rescaled_err_max(&self) -> f64 {
        max_or_nan(&self.rescaled_err)
    }

    pub fn t_gap_max(&self) -> f64 {
        max_or_nan(&self.t_gap)
    }

    pub fn aligned(&self) -> bool {
        self.t_eps.iter().all(|t| t.is_finite())
    }
}

/// All metrics for one rung.
pub fn verify_trajectory(
    scenario: &Scenario,
    pe: &PiecewiseEvolution,
    traj: &Trajectory,
    tol: &Tolerances,
    opts: &VerifyOptions,
) -> Result<ConvergenceReport, VerifyError> {
    let sup = sup_error_off_jumps(scenario, traj, pe, opts.eta, tol)?;
    let mut report = ConvergenceReport {
        eps: traj.eps,
        sup_err_off_jumps: sup,
        rescaled_err: Vec::new(),
        graph_dist: graph_distance(scenario, traj, pe, tol, opts.time_weight, true),
        t_eps: Vec::new(),
        t_gap: Vec::new(),
        clipped: Vec::new(),
        dissipation: traj.total_dissipation(),
        bound_violations: traj.bound_violations,
    };
    let mut prev = 0.0;
    for jump in &pe.jumps {
        let het = &jump.het;
        let delta = het.delta_anchor;
        let aligned = match first_entry(traj, &het.xi, delta, prev, jump.time()) {
            Some(tau1) => rescaled_error(traj, het, opts.window, delta, tau1, tol)?,
            None => None,
        };
        match aligned {
            Some(r) => {
                report.rescaled_err.push(r.sup_err);
                report.t_eps.push(r.t_eps);
                report.t_gap.push((r.t_eps - jump.time()).abs());
                report.clipped.push(r.clipped);
                prev = r.t_eps;
            }
            None => {
                report.rescaled_err.push(f64::NAN);
                report.t_eps.push(f64::NAN);
                report.t_gap.push(f64::NAN);
                report.clipped.push(true);
            }
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub enum OrderFit {
    Slope { slope: f64, residual: f64, excluded: usize },
    Exact,
    InsufficientRungs,
}

impl std::fmt::Display for OrderFit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OrderFit::Slope { slope, residual, excluded } => {
                write!(f, "{slope:.4} (fit residual {residual:.2e}")?;
                if *excluded > 0 {
                    write!(f, ", {excluded} exact rungs excluded")?;
                }
                write!(f, ")")
            }
            OrderFit::Exact => write!(f, "exact"),
            OrderFit::InsufficientRungs => write!(f, "insufficient rungs"),
        }
    }
}

/// Least-squares slope of `log(err)` against `log(ε)`. Zero errors are
/// excluded from the fit; fewer than three rungs give no fit.
pub fn fit_order(eps: &[f64], err: &[f64]) -> OrderFit {
    if eps.len() < 3 {
        return OrderFit::InsufficientRungs;
    }
    let pts: Vec<(f64, f64)> =
        eps.iter().zip(err).filter(|(_, e)| **e > 0.0 && e.is_finite()).map(|(x, e)| (x.ln(), e.ln())).collect();
    let excluded = eps.len() - pts.len();
    if pts.is_empty() {
        return OrderFit::Exact;
    }
    if pts.len() < 2 {
        return OrderFit::InsufficientRungs;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let residual = (pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum::<f64>() / n).sqrt();
    OrderFit::Slope { slope, residual, excluded }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Orders {
    pub sup_err_off_jumps: OrderFit,
    pub rescaled_err_max: OrderFit,
    pub graph_dist: OrderFit,
    pub t_gap_max: OrderFit,
}

pub fn convergence_order(reports: &[ConvergenceReport]) -> Orders {
    let eps: Vec<f64> = reports.iter().map(|r| r.eps).collect();
    let col = |f: fn(&ConvergenceReport) -> f64| -> Vec<f64> { reports.iter().map(f).collect() };
    Orders {
        sup_err_off_jumps: fit_order(&eps, &col(|r| r.sup_err_off_jumps)),
        rescaled_err_max: fit_order(&eps, &col(ConvergenceReport::rescaled_err_max)),
        graph_dist: fit_order(&eps, &col(|r| r.graph_dist)),
        t_gap_max: fit_order(&eps, &col(ConvergenceReport::t_gap_max)),
    }
}
