//! Critical points of `f(t, ·)`, fold refinement and transversality.

use crate::config::Tolerances;
use crate::energy::{Energy, Scenario};
use crate::linalg::{halton_ball, inverse_condition, jacobi_eigen, solve, SymEigen};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PointClass {
    Min,
    Saddle,
    Degenerate,
}

impl PointClass {
    pub fn as_str(self) -> &'static str {
        match self {
            PointClass::Min => "min",
            PointClass::Saddle => "saddle",
            PointClass::Degenerate => "degenerate",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriticalPoint {
    pub t: f64,
    pub x: DVector<f64>,
    pub eigvals: DVector<f64>,
    pub eigvecs: DMatrix<f64>,
    pub grad_norm: f64,
    pub class: PointClass,
}

impl CriticalPoint {
    pub fn lambda_min(&self) -> f64 {
        self.eigvals[0]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldPoint {
    pub t: f64,
    pub x: DVector<f64>,
    pub ell: DVector<f64>,
    pub b: f64,
    pub c: f64,
    pub same_sign: bool,
    /// `(|∇f|, |∇²f·ℓ|)`
    pub residuals: (f64, f64),
}

impl FoldPoint {
    /// The same fold with `ℓ` negated; `b` and `c` flip together.
    pub fn flipped(&self) -> FoldPoint {
        FoldPoint { ell: -&self.ell, b: -self.b, c: -self.c, ..self.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransversalityReport {
    pub b: f64,
    pub c: f64,
    pub same_sign: bool,
    pub verdict: Verdict,
    /// Smallest `|λ|` among the eigenvalues other than the kernel one.
    pub eigen_gap: f64,
    /// The kernel is one-dimensional.
    pub simple_kernel: bool,
    /// All other eigenvalues are positive: the fold can end a stable branch.
    pub psd: bool,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum CriticalError {
    #[error("fold solver did not converge in {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("singular bordered system at t={t:.10}, x={x:?}: b={b:.3e}, c={c:.3e}")]
    SingularJacobian { t: f64, x: Vec<f64>, ell: Vec<f64>, b: f64, c: f64 },
}

/// `|λ| ≤ degeneracy_threshold` counts as a zero eigenvalue.
pub fn degeneracy_threshold(eig: &SymEigen, tol: &Tolerances) -> f64 {
    let norm = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    tol.degeneracy_tol * norm.max(tol.scale)
}

pub fn classify(energy: &Energy, t: f64, x: DVector<f64>, tol: &Tolerances) -> CriticalPoint {
    let grad_norm = energy.gradient(t, &x).norm();
    let eig = jacobi_eigen(&energy.hessian(t, &x));
    let thr = degeneracy_threshold(&eig, tol);
    let class = if eig.values[eig.nearest_zero()].abs() <= thr {
        PointClass::Degenerate
    } else if eig.min() > thr {
        PointClass::Min
    } else {
        PointClass::Saddle
    };
    CriticalPoint { t, x, eigvals: eig.values, eigvecs: eig.vectors, grad_norm, class }
}

/// Damped Newton on `∇f(t, ·) = 0`, merit `|∇f|²`.
pub fn newton_critical(energy: &Energy, t: f64, x0: &DVector<f64>, tol: &Tolerances, max_iter: usize) -> Option<DVector<f64>> {
    let target = tol.newton_tol * tol.scale;
    let mut x = x0.clone();
    let mut g = energy.gradient(t, &x);
    let mut gn = g.norm();
    for _ in 0..max_iter {
        if gn <= target {
            return Some(x);
        }
        let h = energy.hessian(t, &x);
        let p = solve(&h, &(-&g)).unwrap_or_else(|| -&g);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let xn = &x + &p * alpha;
            let gnew = energy.gradient(t, &xn);
            let nn = gnew.norm();
            if nn.is_finite() && nn < (1.0 - 1e-4 * alpha) * gn {
                x = xn;
                g = gnew;
                gn = nn;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return (gn <= target).then_some(x);
        }
    }
    (gn <= target).then_some(x)
}

fn lex_cmp(a: &DVector<f64>, b: &DVector<f64>) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

fn seed_count(dim: usize) -> usize {
    24 + 16 * dim
}

/// All critical points of `f(t, ·)` found by multi-start Newton, sorted
/// lexicographically by `x`.
pub fn find_critical_points(scenario: &Scenario, t: f64, tol: &Tolerances) -> Vec<CriticalPoint> {
    let energy = scenario.energy();
    let radius = scenario.critical_ball_radius() + 1.0;
    let mut seeds = halton_ball(scenario.dim, radius, seed_count(scenario.dim));
    seeds.push(DVector::zeros(scenario.dim));
    let mut found: Vec<DVector<f64>> = seeds
        .par_iter()
        .filter_map(|s| newton_critical(energy, t, s, tol, 100))
        .collect();
    found.sort_by(lex_cmp);
    let merge_grad = 10.0 * tol.newton_tol * tol.scale;
    let mut kept: Vec<(DVector<f64>, f64)> = Vec::new();
    for x in found {
        let gn = energy.gradient(t, &x).norm();
        let dup = kept.iter_mut().find(|(y, _)| {
            let d = (&x - y).norm();
            // a flat valley around a degenerate point: Newton stalls at
            // scattered locations, all joined by a near-stationary segment
            d <= tol.dedup_tol
                || (d <= 1e-2
                    && [0.25, 0.5, 0.75]
                        .iter()
                        .all(|&a| energy.gradient(t, &(&x * (1.0 - a) + &*y * a)).norm() <= merge_grad))
        });
        match dup {
            Some(entry) => {
                if gn < entry.1 {
                    *entry = (x, gn);
                }
            }
            None => kept.push((x, gn)),
        }
    }
    kept.sort_by(|a, b| lex_cmp(&a.0, &b.0));
    if kept.is_empty() {
        log::warn!("no critical point found at t={t}; seeding missed every basin");
    }
    kept.into_iter().map(|(x, _)| classify(energy, t, x, tol)).collect()
}

/// Number of points outside `B(0, √(a0/c0) + ball_slack)`.
pub fn outside_ball(points: &[CriticalPoint], scenario: &Scenario, tol: &Tolerances) -> usize {
    let r = scenario.critical_ball_radius() + tol.ball_slack;
    points.iter().filter(|p| p.x.norm() > r).count()
}

fn bordered_residual(energy: &Energy, t: f64, x: &DVector<f64>, ell: &DVector<f64>) -> DVector<f64> {
    let n = x.len();
    let g = energy.gradient(t, x);
    let hl = energy.hessian(t, x) * ell;
    let mut r = DVector::zeros(2 * n + 1);
    r.rows_mut(0, n).copy_from(&g);
    r.rows_mut(n, n).copy_from(&hl);
    r[2 * n] = ell.norm_squared() - 1.0;
    r
}

fn bordered_jacobian(energy: &Energy, t: f64, x: &DVector<f64>, ell: &DVector<f64>) -> DMatrix<f64> {
    let n = x.len();
    let mut j = DMatrix::zeros(2 * n + 1, 2 * n + 1);
    let h = energy.hessian(t, x);
    j.view_mut((0, 0), (n, 1)).copy_from(&energy.grad_t(t, x));
    j.view_mut((0, 1), (n, n)).copy_from(&h);
    j.view_mut((n, 0), (n, 1)).copy_from(&(energy.hess_t(t, x) * ell));
    j.view_mut((n, 1), (n, n)).copy_from(&energy.third_contract(t, x, ell));
    j.view_mut((n, 1 + n), (n, n)).copy_from(&h);
    j.view_mut((2 * n, 1 + n), (1, n)).copy_from(&(ell.transpose() * 2.0));
    j
}

fn split(z: &DVector<f64>, n: usize) -> (f64, DVector<f64>, DVector<f64>) {
    (z[0], z.rows(1, n).into_owned(), z.rows(1 + n, n).into_owned())
}

/// Newton on the bordered system `(∇f, ∇²f·ℓ, |ℓ|² − 1) = 0` in `(t, x, ℓ)`.
///
/// Without `ell_guess` the eigenvector of the eigenvalue nearest zero is
/// used; the returned `ℓ` keeps the sign of the guess.
pub fn refine_fold(
    scenario: &Scenario,
    t_guess: f64,
    x_guess: &DVector<f64>,
    ell_guess: Option<&DVector<f64>>,
    tol: &Tolerances,
) -> Result<FoldPoint, CriticalError> {
    const MAX_ITER: usize = 50;
    let energy = scenario.energy();
    let n = scenario.dim;
    let ell0 = match ell_guess {
        Some(l) => l.normalize(),
        None => {
            let eig = jacobi_eigen(&energy.hessian(t_guess, x_guess));
            eig.vector(eig.nearest_zero())
        }
    };
    let mut z = DVector::zeros(2 * n + 1);
    z[0] = t_guess;
    z.rows_mut(1, n).copy_from(x_guess);
    z.rows_mut(1 + n, n).copy_from(&ell0);

    let target = tol.fold_tol * tol.scale;
    let mut slow_steps = 0;
    let mut prev_step = f64::INFINITY;
    let mut residual = f64::INFINITY;
    let singular = |z: &DVector<f64>| {
        let (t, x, ell) = split(z, n);
        let ell = ell.normalize();
        CriticalError::SingularJacobian {
            t,
            b: energy.grad_t(t, &x).dot(&ell),
            c: energy.third_form(t, &x, &ell),
            x: x.as_slice().to_vec(),
            ell: ell.as_slice().to_vec(),
        }
    };
    for _ in 0..MAX_ITER {
        let (t, x, ell) = split(&z, n);
        let r = bordered_residual(energy, t, &x, &ell);
        residual = r.norm();
        if !residual.is_finite() {
            break;
        }
        let jac = bordered_jacobian(energy, t, &x, &ell);
        let near = residual <= 1e-4 * tol.scale.max(1.0);
        if residual <= target {
            if inverse_condition(&jac) < 1e-8 {
                return Err(singular(&z));
            }
            let ell = ell.normalize();
            let b = energy.grad_t(t, &x).dot(&ell);
            let c = energy.third_form(t, &x, &ell);
            let res = (energy.gradient(t, &x).norm(), (energy.hessian(t, &x) * &ell).norm());
            return Ok(FoldPoint { t, x, ell, b, c, same_sign: b.signum() == c.signum(), residuals: res });
        }
        let step = match solve(&jac, &(-&r)) {
            Some(s) => s,
            None => {
                if near {
                    return Err(singular(&z));
                }
                match jac.clone().svd(true, true).solve(&(-&r), 1e-12) {
                    Ok(s) => s,
                    Err(_) => break,
                }
            }
        };
        let sn = step.norm();
        if sn < 1e-4 && prev_step.is_finite() && sn >= 0.2 * prev_step {
            slow_steps += 1;
        } else {
            slow_steps = 0;
        }
        if slow_steps >= 3 && near {
            return Err(singular(&z));
        }
        prev_step = sn;
        z += step;
    }
    Err(CriticalError::NoConvergence { iterations: MAX_ITER, residual })
}

pub fn transversality(scenario: &Scenario, fold: &FoldPoint, tol: &Tolerances) -> TransversalityReport {
    let energy = scenario.energy();
    let ell = fold.ell.normalize();
    let b = energy.grad_t(fold.t, &fold.x).dot(&ell);
    let c = energy.third_form(fold.t, &fold.x, &ell);
    let eig = jacobi_eigen(&energy.hessian(fold.t, &fold.x));
    let thr = degeneracy_threshold(&eig, tol);
    let k = eig.nearest_zero();
    let others = (0..eig.values.len()).filter(|&i| i != k).map(|i| eig.values[i]);
    let eigen_gap = others.clone().map(f64::abs).fold(f64::INFINITY, f64::min);
    let psd = others.clone().all(|v| v > thr);
    let verdict = if b.abs() > tol.trans_tol && c.abs() > tol.trans_tol {
        Verdict::Accept
    } else {
        Verdict::Reject
    };
    TransversalityReport {
        b,
        c,
        same_sign: b.signum() == c.signum(),
        verdict,
        eigen_gap,
        simple_kernel: eigen_gap > thr,
        psd,
    }
}

/// A degenerate point found by the census that is not an admissible fold.
#[derive(Clone, Debug, PartialEq)]
pub struct RejectedFold {
    pub t: f64,
    pub x: DVector<f64>,
    pub b: f64,
    pub c: f64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hp3Report {
    pub pass: bool,
    /// Smallest separation between fold times, and from `0` and `T`.
    pub min_gap: f64,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldCensus {
    /// Positive-semidefinite folds, sorted by time.
    pub folds: Vec<FoldPoint>,
    pub rejected: Vec<RejectedFold>,
    /// Degenerate points with a negative eigenvalue; outside the model.
    pub indefinite: usize,
    pub hp3: Hp3Report,
    /// Critical points found on the census grid lying outside the ball.
    pub outside_ball: usize,
}

/// Scans `[0, T]` for degenerate critical points and refines each one.
pub fn fold_census(scenario: &Scenario, tol: &Tolerances) -> FoldCensus {
    let m = (tol.census_points.round() as usize).max(2);
    let times: Vec<f64> = (0..=m).map(|i| scenario.horizon * i as f64 / m as f64).collect();
    let per_time: Vec<Vec<CriticalPoint>> = times.par_iter().map(|&t| find_critical_points(scenario, t, tol)).collect();
    let outside = per_time.iter().map(|p| outside_ball(p, scenario, tol)).sum();

    let mut candidates: Vec<(f64, DVector<f64>, DVector<f64>)> = Vec::new();
    for pts in &per_time {
        for p in pts.iter().filter(|p| p.class == PointClass::Degenerate) {
            let k = jacobi_eigen(&scenario.energy().hessian(p.t, &p.x)).nearest_zero();
            candidates.push((p.t, p.x.clone(), p.eigvecs.column(k).into_owned()));
        }
    }
    for w in per_time.windows(2) {
        if w[0].len() == w[1].len() {
            continue;
        }
        let richer = if w[0].len() > w[1].len() { &w[0] } else { &w[1] };
        // the pair that is about to coalesce: nearest eigenvalue to zero
        if let Some(p) = richer
            .iter()
            .min_by(|a, b| {
                let la = a.eigvals.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
                let lb = b.eigvals.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
                la.total_cmp(&lb)
            })
        {
            let eig = jacobi_eigen(&scenario.energy().hessian(p.t, &p.x));
            candidates.push((p.t, p.x.clone(), eig.vector(eig.nearest_zero())));
            // a second guess from the saddle-min midpoint
            let mut near: Vec<&CriticalPoint> = richer.iter().collect();
            near.sort_by(|a, b| (&a.x - &p.x).norm().total_cmp(&(&b.x - &p.x).norm()));
            if near.len() >= 2 {
                let mid = (&near[0].x + &near[1].x) * 0.5;
                candidates.push((p.t, mid, eig.vector(eig.nearest_zero())));
            }
        }
    }

    let results: Vec<Result<FoldPoint, CriticalError>> = candidates
        .par_iter()
        .map(|(t, x, l)| refine_fold(scenario, *t, x, Some(l), tol))
        .collect();

    let mut folds: Vec<FoldPoint> = Vec::new();
    let mut rejected: Vec<RejectedFold> = Vec::new();
    let mut indefinite = 0;
    let same = |t1: f64, x1: &DVector<f64>, t2: f64, x2: &DVector<f64>| {
        (t1 - t2).abs() <= 1e-6 * scenario.horizon.max(1.0) && (x1 - x2).norm() <= 1e-5
    };
    for r in results {
        match r {
            Ok(f) => {
                if f.t < -tol.time_sep * scenario.horizon || f.t > scenario.horizon * (1.0 + tol.time_sep) {
                    continue;
                }
                if folds.iter().any(|g| same(g.t, &g.x, f.t, &f.x)) || rejected.iter().any(|g| same(g.t, &g.x, f.t, &f.x)) {
                    continue;
                }
                let rep = transversality(scenario, &f, tol);
                if !rep.psd {
                    indefinite += 1;
                    continue;
                }
                if rep.verdict == Verdict::Reject || !rep.simple_kernel {
                    rejected.push(RejectedFold {
                        t: f.t,
                        x: f.x.clone(),
                        b: rep.b,
                        c: rep.c,
                        reason: if rep.simple_kernel { "transversality".into() } else { "kernel not simple".into() },
                    });
                    continue;
                }
                folds.push(f);
            }
            Err(CriticalError::SingularJacobian { t, x, b, c, .. }) => {
                let x = DVector::from_vec(x);
                if rejected.iter().any(|g| same(g.t, &g.x, t, &x)) {
                    continue;
                }
                let reason = if c.abs() <= tol.trans_tol {
                    "cubic coefficient vanishes"
                } else if b.abs() <= tol.trans_tol {
                    "time derivative vanishes"
                } else {
                    "singular bordered system"
                };
                rejected.push(RejectedFold { t, x, b, c, reason: reason.into() });
            }
            Err(CriticalError::NoConvergence { .. }) => {}
        }
    }
    folds.sort_by(|a, b| a.t.total_cmp(&b.t));
    rejected.sort_by(|a, b| a.t.total_cmp(&b.t));
    let hp3 = check_hp3(&folds, &rejected, scenario.horizon, tol);
    FoldCensus { folds, rejected, indefinite, hp3, outside_ball: outside }
}

/// Finiteness and injectivity of the time projection, checked on the
/// discovered degenerate points.
pub fn check_hp3(folds: &[FoldPoint], rejected: &[RejectedFold], horizon: f64, tol: &Tolerances) -> Hp3Report {
    let sep = tol.time_sep * horizon;
    let mut times: Vec<f64> = folds.iter().map(|f| f.t).chain(rejected.iter().map(|r| r.t)).collect();
    times.sort_by(f64::total_cmp);
    let mut min_gap = f64::INFINITY;
    let mut message = String::new();
    for t in &times {
        let edge = t.abs().min((horizon - t).abs());
        min_gap = min_gap.min(edge);
        if edge <= sep && message.is_empty() {
            message = format!("degenerate point at t={t:.10} lies on the boundary of [0, T]");
        }
    }
    for w in times.windows(2) {
        let gap = w[1] - w[0];
        min_gap = min_gap.min(gap);
        if gap <= sep && message.is_empty() {
            message = format!("degenerate points share the time t={:.10}", w[0]);
        }
    }
    Hp3Report { pass: message.is_empty(), min_gap, message }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn t1() -> f64 {
        2.0 / (3.0 * 3f64.sqrt())
    }

    #[test]
    fn dwell_critical_points_at_zero() {
        let s = Scenario::builtin("dwell").unwrap();
        let tol = Tolerances::default();
        let pts = find_critical_points(&s, 0.0, &tol);
        let xs: Vec<f64> = pts.iter().map(|p| p.x[0]).collect();
        assert_eq!(pts.len(), 3, "{xs:?}");
        for (x, want) in xs.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((x - want).abs() < 1e-10);
        }
        let classes: Vec<PointClass> = pts.iter().map(|p| p.class).collect();
        assert_eq!(classes, [PointClass::Min, PointClass::Saddle, PointClass::Min]);
    }

    #[test]
    fn dwell_points_around_the_fold() {
        let s = Scenario::builtin("dwell").unwrap();
        let tol = Tolerances::default();
        let before = find_critical_points(&s, t1() - 1e-3, &tol);
        assert_eq!(before.len(), 3);
        let x1 = -1.0 / 3f64.sqrt();
        let close = before.iter().filter(|p| (p.x[0] - x1).abs() < 0.1).count();
        assert_eq!(close, 2);
        let after = find_critical_points(&s, t1() + 1e-3, &tol);
        assert_eq!(after.len(), 1);
        assert!((after[0].x[0] - 2.0 / 3f64.sqrt()).abs() < 1e-2);
    }

    #[test]
    fn fold_oracle_dwell() {
        let s = Scenario::builtin("dwell").unwrap();
        let tol = Tolerances::default();
        let f = refine_fold(&s, 0.38, &v(&[-0.58]), None, &tol).unwrap();
        assert!((f.t - t1()).abs() < 1e-12);
        assert!((f.x[0] + 1.0 / 3f64.sqrt()).abs() < 1e-10);
        assert!(f.residuals.0 <= 1e-10 && f.residuals.1 <= 1e-10);
        let rep = transversality(&s, &f, &tol);
        let (b, c) = if f.ell[0] > 0.0 { (rep.b, rep.c) } else { (-rep.b, -rep.c) };
        assert!((b + 1.0).abs() < 1e-12);
        assert!((c + 2.0 * 3f64.sqrt()).abs() < 1e-10);
        assert!(rep.same_sign);
        assert_eq!(rep.verdict, Verdict::Accept);
    }

    #[test]
    fn fold_is_sign_covariant() {
        let s = Scenario::builtin("dwell2d").unwrap();
        let tol = Tolerances::default();
        let guess = v(&[-0.58, 0.01]);
        let a = refine_fold(&s, 0.38, &guess, Some(&v(&[1.0, 0.0])), &tol).unwrap();
        let b = refine_fold(&s, 0.38, &guess, Some(&v(&[-1.0, 0.0])), &tol).unwrap();
        assert!((a.t - b.t).abs() < 1e-14);
        assert!((&a.x - &b.x).norm() < 1e-12);
        assert!((&a.ell + &b.ell).norm() < 1e-12);
        assert!(a.x[1].abs() < 1e-12);
        assert!((a.ell[0].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quadratic_has_no_fold() {
        let s = Scenario::builtin("quadratic").unwrap();
        let r = refine_fold(&s, 0.5, &v(&[0.3]), Some(&v(&[1.0])), &Tolerances::default());
        assert!(matches!(r, Err(CriticalError::NoConvergence { .. })), "{r:?}");
    }

    #[test]
    fn degenerate_point_is_rejected() {
        let s = Scenario::builtin("degenerate").unwrap();
        let tol = Tolerances::default();
        match refine_fold(&s, 0.01, &v(&[0.05]), Some(&v(&[1.0])), &tol) {
            Err(CriticalError::SingularJacobian { c, .. }) => assert!(c.abs() < 1e-2),
            other => panic!("unexpected {other:?}"),
        }
        let census = fold_census(&s, &tol);
        assert!(census.folds.is_empty());
        assert!(!census.rejected.is_empty());
        assert!(census.rejected[0].c.abs() <= tol.trans_tol * 1e4);
    }

    #[test]
    fn census_dwell_finds_one_fold() {
        let s = Scenario::builtin("dwell").unwrap();
        let tol = Tolerances::default();
        let census = fold_census(&s, &tol);
        assert_eq!(census.folds.len(), 1, "{census:?}");
        assert!((census.folds[0].t - t1()).abs() < 1e-10);
        assert!(census.hp3.pass);
        assert_eq!(census.outside_ball, 0);
    }

    #[test]
    fn census_quadratic_is_empty() {
        let s = Scenario::builtin("quadratic").unwrap();
        let census = fold_census(&s, &Tolerances::default());
        assert!(census.folds.is_empty() && census.rejected.is_empty());
        assert!(census.hp3.pass);
    }

    #[test]
    fn census_oscillating_finds_five_folds() {
        let s = Scenario::builtin("oscillating").unwrap();
        let census = fold_census(&s, &Tolerances::default());
        assert_eq!(census.folds.len(), 5, "{:?}", census.folds.iter().map(|f| f.t).collect::<Vec<_>>());
    }

    #[test]
    fn transversality_under_rotation() {
        let (cs, sn) = (0.6f64, 0.8f64);
        // x = R y with R = [[c, -s], [s, c]]
        let x1 = format!("({cs}*x1 - {sn}*x2)");
        let x2 = format!("({sn}*x1 + {cs}*x2)");
        let f = format!("{x1}^4/4 - {x1}^2/2 - t*{x1} + {x2}^2/2");
        let rot = Scenario::from_text(&format!(
            "name = rot\nn = 2\nT = 0.6\nf = {f}\nc0 = 0.5\na0 = 2\ny0 = {}, {}\neps = 0.01\n",
            -cs,
            sn
        ))
        .unwrap();
        let tol = Tolerances::default();
        let xr = -1.0 / 3f64.sqrt();
        let guess = v(&[cs * xr + 0.01, -sn * xr]);
        let f = refine_fold(&rot, 0.38, &guess, None, &tol).unwrap();
        let rep = transversality(&rot, &f, &tol);
        assert!((rep.b.abs() - 1.0).abs() < 1e-9);
        assert!((rep.c.abs() - 2.0 * 3f64.sqrt()).abs() < 1e-8);
        assert!(rep.same_sign);
        assert_eq!(rep.verdict, Verdict::Accept);
    }
}
