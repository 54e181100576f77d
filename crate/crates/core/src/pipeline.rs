//! End-to-end orchestration: assumption checks, limit construction, ε-ladder
//! simulation, verification and CSV output.

use crate::config::{ConfigError, Tolerances};
use crate::critical::{
    fold_census, find_critical_points, transversality, CriticalError, CriticalPoint, FoldCensus, FoldPoint,
    TransversalityReport, Verdict,
};
use crate::energy::{check_coercivity, CoercivityReport, GridSpec, Scenario, ScenarioError};
use crate::evolution::{build_slow_fast_evolution, EvolutionError, PiecewiseEvolution};
use crate::fast::{check_hp4, heteroclinic_from_fold, FastError, HetOptions, Heteroclinic, Hp4Report};
use crate::flow::{
    exit_time, integrate_eps_flow, last_entry_time, EventKind, FlowError, FlowOptions, Trajectory,
};
use crate::slow::EndReason;
use crate::verify::{
    convergence_order, first_entry, verify_trajectory, ConvergenceReport, Orders, VerifyError, VerifyOptions,
};
use nalgebra::DVector;
use rayon::prelude::*;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const WATERMARK: &str = "# UNVERIFIED-ASSUMPTIONS";

#[derive(Debug, Error)]
pub enum Error {
    #[error("scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("usage: {0}")]
    Usage(String),
    #[error("assumption check failed:\n{0}")]
    Assumption(String),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
    #[error(transparent)]
    Critical(#[from] CriticalError),
    #[error(transparent)]
    Fast(#[from] FastError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("stage `{stage}`: {source}")]
    Stage { stage: &'static str, source: Box<Error> },
}

impl Error {
    /// 0 success, 1 assumption or verification failure, 2 usage or parse
    /// error, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Scenario(_) | Error::Config(_) | Error::Usage(_) | Error::Io { .. } => 2,
            Error::Assumption(_) => 1,
            Error::Evolution(e) => {
                if e.is_assumption() {
                    1
                } else {
                    3
                }
            }
            Error::Fast(FastError::DegenerateLanding { .. }) => 1,
            Error::Verify(VerifyError::Slow(_) | VerifyError::Fast(_)) => 3,
            Error::Verify(_) => 1,
            Error::Critical(_) | Error::Fast(_) | Error::Flow(_) => 3,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }

    fn at(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |e| Error::Stage { stage, source: Box::new(e) }
    }
}

fn stage<T, E: Into<Error>>(name: &'static str, r: Result<T, E>) -> Result<T, Error> {
    r.map_err(|e| Error::at(name)(e.into()))
}

/// Everything a subcommand needs besides its own arguments.
#[derive(Clone, Debug)]
pub struct RunConfig {
    /// Path to a scenario file or `builtin:NAME`.
    pub scenario: String,
    pub out_dir: Option<PathBuf>,
    pub jobs: usize,
    pub overrides: Vec<String>,
    pub force: bool,
    /// Replaces the scenario's ε ladder.
    pub eps: Option<Vec<f64>>,
    /// Initial data `y0 + ε·d`.
    pub perturb: Option<Vec<f64>>,
    pub het: HetOptions,
    pub time_weight: f64,
    /// Exclusion half-width; defaults to `eta · T`.
    pub eta: Option<f64>,
}

impl RunConfig {
    pub fn new(scenario: impl Into<String>) -> RunConfig {
        RunConfig {
            scenario: scenario.into(),
            out_dir: None,
            jobs: 0,
            overrides: Vec::new(),
            force: false,
            eps: None,
            perturb: None,
            het: HetOptions::default(),
            time_weight: 1.0,
            eta: None,
        }
    }

    pub fn load(&self) -> Result<(Scenario, Tolerances), Error> {
        let scenario = Scenario::load(&self.scenario)?;
        let tol = Tolerances::default().with_overrides(&self.overrides)?;
        if let Some(d) = &self.perturb {
            if d.len() != scenario.dim {
                return Err(Error::Usage(format!("--perturb needs {} components, got {}", scenario.dim, d.len())));
            }
        }
        if let Some(e) = &self.eps {
            if e.is_empty() || e.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::Usage("--eps values must be positive".into()));
            }
        }
        Ok((scenario, tol))
    }

    pub fn ladder(&self, scenario: &Scenario) -> Vec<f64> {
        self.eps.clone().unwrap_or_else(|| scenario.eps_ladder.clone())
    }

    pub fn initial_point(&self, scenario: &Scenario, eps: f64) -> DVector<f64> {
        match &self.perturb {
            Some(d) => &scenario.y0 + DVector::from_column_slice(d) * eps,
            None => scenario.y0.clone(),
        }
    }

    pub fn verify_options(&self, scenario: &Scenario, tol: &Tolerances) -> VerifyOptions {
        let mut o = VerifyOptions::from_tolerances(scenario, tol);
        o.time_weight = self.time_weight;
        if let Some(eta) = self.eta {
            o.eta = eta;
        }
        o
    }

    /// Resolves an output path against the output directory.
    pub fn output_path(&self, name: &Path) -> PathBuf {
        match &self.out_dir {
            Some(dir) if name.is_relative() => dir.join(name),
            _ => name.to_path_buf(),
        }
    }

    fn pool(&self) -> rayon::ThreadPool {
        rayon::ThreadPoolBuilder::new().num_threads(self.jobs).build().expect("thread pool")
    }
}

/// One PASS/FAIL line of the assumption report.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct FoldCheck {
    pub fold: FoldPoint,
    pub transversality: TransversalityReport,
    pub landing: Result<(Heteroclinic, Hp4Report), FastError>,
}

#[derive(Clone, Debug)]
pub struct AssumptionReport {
    pub coercivity: CoercivityReport,
    pub census: FoldCensus,
    pub folds: Vec<FoldCheck>,
    pub checks: Vec<Check>,
}

impl AssumptionReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> String {
        self.checks.iter().filter(|c| !c.pass).map(|c| format!("FAIL {}: {}", c.name, c.detail)).collect::<Vec<_>>().join("\n")
    }
}

impl fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        Ok(())
    }
}

/// Runs every assumption check on the scenario.
pub fn cmd_check(scenario: &Scenario, tol: &Tolerances, het: HetOptions) -> AssumptionReport {
    let mut checks = Vec::new();
    let ball = scenario.critical_ball_radius();
    let radius = 2.0 * ball.max(scenario.y0.norm()).max(1.0);
    let coercivity = check_coercivity(scenario, radius, GridSpec::default());
    checks.push(Check {
        name: "coercivity".into(),
        pass: coercivity.pass,
        detail: format!(
            "min margin {:.6e} over {} samples in B(0, {radius}){}; critical points in B(0, {ball:.6})",
            coercivity.min_margin,
            coercivity.samples,
            if coercivity.polynomial_certified { ", polynomial-certified" } else { "" }
        ),
    });

    let init = &scenario.initial;
    let grad_tol = 1e3 * tol.newton_tol * tol.scale;
    checks.push(Check {
        name: "initial point".into(),
        pass: init.passes(grad_tol, 0.0),
        detail: format!("|∇f(0, y0)| = {:.3e}, λ_min = {:.6e}", init.grad_norm, init.lambda_min),
    });

    let census = fold_census(scenario, tol);
    checks.push(Check {
        name: "critical ball".into(),
        pass: census.outside_ball == 0,
        detail: format!("{} critical points outside B(0, {ball:.6})", census.outside_ball),
    });
    checks.push(Check {
        name: "fold set".into(),
        pass: census.hp3.pass,
        detail: if census.hp3.pass {
            format!(
                "{} folds, {} rejected, min time gap {:.6e}{}",
                census.folds.len(),
                census.rejected.len(),
                census.hp3.min_gap,
                if census.indefinite > 0 { format!(", {} indefinite degenerate points", census.indefinite) } else { String::new() }
            )
        } else {
            census.hp3.message.clone()
        },
    });
    for r in &census.rejected {
        checks.push(Check {
            name: "transversality".into(),
            pass: false,
            detail: format!("t={:.10} x={} b={:.6e} c={:.6e}: {}", r.t, fmt_point(&r.x), r.b, r.c, r.reason),
        });
    }

    let folds: Vec<FoldCheck> = census
        .folds
        .par_iter()
        .map(|f| {
            let rep = transversality(scenario, f, tol);
            let landing = heteroclinic_from_fold(scenario, f, tol, het).map(|h| {
                let hp4 = check_hp4(scenario, &h, tol);
                (h, hp4)
            });
            FoldCheck { fold: f.clone(), transversality: rep, landing }
        })
        .collect();
    for (i, fc) in folds.iter().enumerate() {
        let r = &fc.transversality;
        checks.push(Check {
            name: format!("transversality fold {}", i + 1),
            pass: r.verdict == Verdict::Accept && r.simple_kernel,
            detail: format!(
                "t={:.10} x={} b={:.6e} c={:.6e}{}",
                fc.fold.t,
                fmt_point(&fc.fold.x),
                r.b,
                r.c,
                if r.same_sign { "" } else { " (opposite signs: two branches are born here)" }
            ),
        });
        let (pass, detail) = match &fc.landing {
            Ok((h, hp4)) => (
                hp4.pass,
                format!("lands at {} with λ_min = {:.6e}", fmt_point(&h.w_inf), hp4.lambda_min),
            ),
            Err(e) => (false, e.to_string()),
        };
        checks.push(Check { name: format!("landing fold {}", i + 1), pass, detail });
    }
    AssumptionReport { coercivity, census, folds, checks }
}

fn fmt_point(x: &DVector<f64>) -> String {
    let parts: Vec<String> = x.iter().map(|v| format!("{v:.10}")).collect();
    format!("({})", parts.join(", "))
}

/// Full-precision CSV number.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn header(prefix: &str, n: usize, suffix: &[&str]) -> String {
    let mut cols = vec![prefix.to_string()];
    cols.extend((1..=n).map(|i| format!("x{i}")));
    cols.extend(suffix.iter().map(|s| s.to_string()));
    cols.join(",")
}

fn row(lead: f64, x: &DVector<f64>, rest: &[String]) -> String {
    let mut cols = vec![num(lead)];
    cols.extend(x.iter().map(|v| num(*v)));
    cols.extend(rest.iter().cloned());
    cols.join(",")
}

pub fn critical_csv(points: &[CriticalPoint], n: usize) -> String {
    let mut out = header("t", n, &["lambda_min", "class"]) + "\n";
    for p in points {
        out += &row(p.t, &p.x, &[num(p.lambda_min()), p.class.as_str().into()]);
        out.push('\n');
    }
    out
}

pub fn branch_csv(pe: &PiecewiseEvolution, n: usize) -> String {
    let mut out = header("t", n, &["lambda_min", "branch_index", "event"]) + "\n";
    for b in &pe.branches {
        let last = b.t.len() - 1;
        for i in 0..b.t.len() {
            let event = if i == last && matches!(b.end, EndReason::Fold(_)) { "fold" } else { "" };
            out += &row(b.t[i], &b.x[i], &[num(b.lambda_min[i]), b.index.to_string(), event.into()]);
            out.push('\n');
        }
    }
    out
}

pub fn heteroclinic_csv(scenario: &Scenario, het: &Heteroclinic) -> String {
    let energy = scenario.energy();
    let mut out = header("s", scenario.dim, &["grad_norm", "f_value"]) + "\n";
    for (s, v) in het.s.iter().zip(&het.v) {
        out += &row(*s, v, &[num(energy.gradient(het.tau, v).norm()), num(energy.value(het.tau, v))]);
        out.push('\n');
    }
    out
}

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let n = traj.states[0].len();
    let mut out = header("t", n, &["deriv_norm", "step_size"]) + "\n";
    for i in 0..traj.times.len() {
        out += &row(traj.times[i], &traj.states[i], &[num(traj.deriv_norms[i]), num(traj.step_sizes[i])]);
        out.push('\n');
    }
    for e in &traj.events {
        let _ = writeln!(out, "# event {} {}", e.kind.as_str(), num(e.time));
    }
    out
}

pub fn report_csv(reports: &[ConvergenceReport], orders: &Orders, jumps: usize) -> String {
    let mut cols = vec!["eps".to_string(), "sup_err_off_jumps".into(), "rescaled_err_max".into(), "graph_dist".into()];
    cols.extend((1..=jumps).map(|i| format!("t_eps_{i}")));
    let mut out = cols.join(",") + "\n";
    for r in reports {
        let mut c = vec![num(r.eps), num(r.sup_err_off_jumps), num(r.rescaled_err_max()), num(r.graph_dist)];
        c.extend(r.t_eps.iter().map(|t| num(*t)));
        out += &c.join(",");
        out.push('\n');
    }
    for r in reports.iter().filter(|r| !r.aligned()) {
        let _ = writeln!(out, "# note eps={} does not cross every anchor sphere; undefined entries are NaN", num(r.eps));
    }
    let _ = writeln!(
        out,
        "# orders sup_err_off_jumps={} rescaled_err_max={} graph_dist={} t_gap_max={}",
        orders.sup_err_off_jumps, orders.rescaled_err_max, orders.graph_dist, orders.t_gap_max
    );
    out
}

/// Writes `contents`, prefixed with the watermark when `unverified`.
pub fn write_file(path: &Path, contents: &str, unverified: bool) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.display().to_string(), source })?;
    }
    let text = if unverified { format!("{WATERMARK}\n{contents}") } else { contents.to_string() };
    std::fs::write(path, text).map_err(|source| Error::Io { path: path.display().to_string(), source })
}

/// Gate for the stages after `check`: `Ok(true)` when running unverified.
pub fn gate(scenario: &Scenario, tol: &Tolerances, cfg: &RunConfig) -> Result<bool, Error> {
    let report = cmd_check(scenario, tol, cfg.het);
    if report.pass() {
        return Ok(false);
    }
    if cfg.force {
        log::warn!("assumption checks failed; continuing because of --force\n{}", report.failures());
        return Ok(true);
    }
    Err(Error::Assumption(report.failures()))
}

/// Integrates the ε-flow and records the exit and last-entry events of each
/// jump of `pe`.
pub fn simulate(
    scenario: &Scenario,
    pe: Option<&PiecewiseEvolution>,
    eps: f64,
    x_init: &DVector<f64>,
    tol: &Tolerances,
) -> Result<Trajectory, FlowError> {
    let mut traj = integrate_eps_flow(scenario, eps, x_init, tol, FlowOptions::default())?;
    let Some(pe) = pe else { return Ok(traj) };
    let mut prev = 0.0;
    for j in &pe.jumps {
        let xi = &j.het.xi;
        let delta = j.het.delta_anchor;
        let Some(tau1) = first_entry(&traj, xi, delta, prev, j.time()) else { continue };
        let Some(te) = exit_time(&traj, xi, delta, tau1, tol) else { continue };
        traj.record(EventKind::ExitDelta, te);
        if let Some(tl) = last_entry_time(&traj, xi, 0.5 * delta, te, tol) {
            traj.record(EventKind::LastEntryDelta, tl);
        }
        prev = te;
    }
    Ok(traj)
}

pub struct LadderRun {
    pub trajectories: Vec<Trajectory>,
    pub reports: Vec<ConvergenceReport>,
    pub orders: Orders,
}

/// Simulates and verifies every rung concurrently, bounded by `cfg.jobs`.
pub fn run_ladder(
    scenario: &Scenario,
    pe: &PiecewiseEvolution,
    tol: &Tolerances,
    cfg: &RunConfig,
) -> Result<LadderRun, Error> {
    let ladder = cfg.ladder(scenario);
    let opts = cfg.verify_options(scenario, tol);
    let results: Vec<Result<(Trajectory, ConvergenceReport), Error>> = cfg.pool().install(|| {
        ladder
            .par_iter()
            .map(|&eps| {
                let x0 = cfg.initial_point(scenario, eps);
                let traj = stage("simulate", simulate(scenario, Some(pe), eps, &x0, tol))?;
                let rep = stage("verify", verify_trajectory(scenario, pe, &traj, tol, &opts))?;
                Ok((traj, rep))
            })
            .collect()
    });
    let mut trajectories = Vec::new();
    let mut reports = Vec::new();
    for r in results {
        let (t, rep) = r?;
        trajectories.push(t);
        reports.push(rep);
    }
    let orders = convergence_order(&reports);
    Ok(LadderRun { trajectories, reports, orders })
}

/// File name of the trajectory CSV of one rung.
pub fn trajectory_file(eps: f64) -> String {
    format!("traj_eps_{eps:e}.csv")
}

/// Writes `assumptions.txt`, `branch.csv`, `het_<i>.csv`, one trajectory
/// per rung and `report.csv` into the output directory.
pub fn cmd_pipeline(cfg: &RunConfig) -> Result<Vec<PathBuf>, Error> {
    let (scenario, tol) = cfg.load()?;
    let check = cmd_check(&scenario, &tol, cfg.het);
    let unverified = !check.pass();
    if unverified && !cfg.force {
        return Err(Error::Assumption(check.failures()));
    }
    let pe = stage("construct", build_slow_fast_evolution(&scenario, &tol, cfg.het))?;
    let run = run_ladder(&scenario, &pe, &tol, cfg)?;
    let dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let mut written = Vec::new();
    let mut put = |name: String, text: String| -> Result<(), Error> {
        let p = dir.join(name);
        write_file(&p, &text, unverified)?;
        written.push(p);
        Ok(())
    };
    put("assumptions.txt".into(), check.to_string())?;
    put("branch.csv".into(), branch_csv(&pe, scenario.dim))?;
    for (i, j) in pe.jumps.iter().enumerate() {
        put(format!("het_{}.csv", i + 1), heteroclinic_csv(&scenario, &j.het))?;
    }
    for t in &run.trajectories {
        put(trajectory_file(t.eps), trajectory_csv(t))?;
    }
    put("report.csv".into(), report_csv(&run.reports, &run.orders, pe.jumps.len()))?;
    Ok(written)
}

/// Critical points of `f(t, ·)`.
pub fn cmd_critical(scenario: &Scenario, t: f64, tol: &Tolerances) -> Result<Vec<CriticalPoint>, Error> {
    if !(0.0..=scenario.horizon).contains(&t) {
        return Err(Error::Usage(format!("t={t} outside [0, {}]", scenario.horizon)));
    }
    Ok(find_critical_points(scenario, t, tol))
}

/// Heteroclinic leaving the `index`-th fold (1-based) of the census.
pub fn cmd_fast(scenario: &Scenario, index: usize, tol: &Tolerances, het: HetOptions) -> Result<Heteroclinic, Error> {
    let census = fold_census(scenario, tol);
    let fold = index
        .checked_sub(1)
        .and_then(|i| census.folds.get(i))
        .ok_or_else(|| Error::Usage(format!("fold index {index} out of range (1..={})", census.folds.len())))?;
    stage("fast", heteroclinic_from_fold(scenario, fold, tol, het))
}

/// Branch samples and landing points outside the critical-point ball.
pub fn ball_violations(scenario: &Scenario, pe: &PiecewiseEvolution, tol: &Tolerances) -> usize {
    let r = scenario.critical_ball_radius() + tol.ball_slack;
    let branch = pe.branches.iter().flat_map(|b| b.x.iter()).filter(|x| x.norm() > r).count();
    let landing = pe.jumps.iter().filter(|j| j.landing().norm() > r).count();
    branch + landing
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dwell_passes_every_check() {
        let s = Scenario::builtin("dwell").unwrap();
        let rep = cmd_check(&s, &Tolerances::default(), HetOptions::default());
        assert!(rep.pass(), "{rep}");
        assert_eq!(rep.census.folds.len(), 1);
        let tr = &rep.folds[0].transversality;
        assert!((tr.b + 1.0).abs() < 1e-6 && (tr.c + 2.0 * 3f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn quadratic_has_no_folds() {
        let s = Scenario::builtin("quadratic").unwrap();
        let rep = cmd_check(&s, &Tolerances::default(), HetOptions::default());
        assert!(rep.pass(), "{rep}");
        assert!(rep.census.folds.is_empty());
    }

    #[test]
    fn negative_controls_fail() {
        for name in ["degenerate", "saddle_landing"] {
            let s = Scenario::builtin(name).unwrap();
            let rep = cmd_check(&s, &Tolerances::default(), HetOptions::default());
            assert!(!rep.pass(), "{name}");
            assert_eq!(Error::Assumption(rep.failures()).exit_code(), 1);
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(Error::Usage("x".into()).exit_code(), 2);
        assert_eq!(Error::Flow(FlowError::NonFinite { t: 0.0 }).exit_code(), 3);
        let wrapped = Error::Stage { stage: "simulate", source: Box::new(Error::Flow(FlowError::BadEps(0.0))) };
        assert_eq!(wrapped.exit_code(), 3);
        assert!(wrapped.to_string().contains("simulate"));
    }

    #[test]
    fn csv_numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.0 / 3f64.sqrt(), 1e-300, 6.02e23] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }
}
