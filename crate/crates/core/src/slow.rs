//! Continuation of equilibrium branches `∇f(t, u(t)) = 0` in `t`.

use crate::config::Tolerances;
use crate::critical::{find_critical_points, refine_fold, CriticalError, FoldPoint};
use crate::dense;
use crate::energy::{Energy, Scenario};
use crate::linalg::{halton_ball, jacobi_eigen, solve};
use nalgebra::DVector;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum SlowError {
    #[error("start point at t={t} is not a stable equilibrium (|∇f|={grad:.3e}, λ_min={lambda:.3e})")]
    NotStable { t: f64, grad: f64, lambda: f64 },
    #[error("continuation step fell below the minimum at t={t}")]
    StepUnderflow { t: f64 },
    #[error("Hessian solve failed at t={t} before the fold trigger")]
    HessianSolve { t: f64 },
    #[error("fold refinement failed: {0}")]
    Fold(#[from] CriticalError),
    #[error("fold refinement moved backwards in time (t={t_fold} < {t_last})")]
    FoldBehind { t_fold: f64, t_last: f64 },
    #[error("t={t} outside [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum EndReason {
    ReachedT,
    Fold(FoldPoint),
}

#[derive(Clone, Debug)]
pub struct Branch {
    pub index: usize,
    pub t: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    /// `u̇ = −H⁻¹ ∇f_t`; not finite at a fold sample.
    pub dx: Vec<DVector<f64>>,
    pub lambda_min: Vec<f64>,
    pub end: EndReason,
    /// `+1` for the branch that ends at the fold stably, `-1` for its sibling.
    side: f64,
}

impl Branch {
    pub fn t_start(&self) -> f64 {
        self.t[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.t.last().unwrap()
    }

    pub fn fold(&self) -> Option<&FoldPoint> {
        match &self.end {
            EndReason::Fold(f) => Some(f),
            EndReason::ReachedT => None,
        }
    }

    /// Interpolated branch point at `t`, polished back onto `∇f = 0`.
    pub fn eval(&self, energy: &Energy, t: f64, tol: &Tolerances) -> Result<DVector<f64>, SlowError> {
        let (lo, hi) = (self.t_start(), self.t_end());
        if t < lo || t > hi {
            return Err(SlowError::OutOfRange { t, lo, hi });
        }
        let last = self.t.len() - 1;
        if t == self.t[last] {
            return Ok(self.x[last].clone());
        }
        let i = dense::bracket(&self.t, t);
        let guess = match (&self.end, i + 1 == last) {
            (EndReason::Fold(f), true) => sqrt_guess(f, t, self.side),
            _ => dense::cubic(self.t[i], self.t[i + 1], &self.x[i], &self.x[i + 1], &self.dx[i], &self.dx[i + 1], t),
        };
        Ok(polish(energy, t, guess, tol))
    }

    /// `du/dt` at `t` from the predictor equation.
    pub fn slope(&self, energy: &Energy, t: f64, tol: &Tolerances) -> Result<DVector<f64>, SlowError> {
        let x = self.eval(energy, t, tol)?;
        solve(&energy.hessian(t, &x), &(-energy.grad_t(t, &x))).ok_or(SlowError::HessianSolve { t })
    }
}

/// Leading-order branch through the fold: `ξ + side·sign(c)·ℓ·√(2b(τ − t)/c)`.
fn sqrt_guess(f: &FoldPoint, t: f64, side: f64) -> DVector<f64> {
    let ratio = (2.0 * f.b * (f.t - t) / f.c).max(0.0);
    &f.x + &f.ell * (side * f.c.signum() * ratio.sqrt())
}

/// Up to three Newton steps at frozen `t`.
fn polish(energy: &Energy, t: f64, mut x: DVector<f64>, tol: &Tolerances) -> DVector<f64> {
    let target = 0.1 * tol.branch_tol * tol.scale;
    for _ in 0..3 {
        let g = energy.gradient(t, &x);
        if g.norm() <= target {
            break;
        }
        match solve(&energy.hessian(t, &x), &g) {
            Some(step) => x -= step,
            None => break,
        }
    }
    x
}

fn corrector(energy: &Energy, t: f64, mut x: DVector<f64>, tol: &Tolerances) -> Option<DVector<f64>> {
    let target = tol.branch_tol * tol.scale;
    for _ in 0..25 {
        let g = energy.gradient(t, &x);
        let gn = g.norm();
        if !gn.is_finite() {
            return None;
        }
        let step = solve(&energy.hessian(t, &x), &g)?;
        x -= &step;
        // one step past the residual target costs little and removes the
        // g/λ error near a fold
        if gn <= 0.01 * target || step.norm() <= 1e-13 * (1.0 + x.norm()) {
            break;
        }
    }
    (energy.gradient(t, &x).norm() <= target).then_some(x)
}

fn lambda_min(energy: &Energy, t: f64, x: &DVector<f64>) -> f64 {
    jacobi_eigen(&energy.hessian(t, x)).min()
}

/// Predictor–corrector continuation of the stable branch through
/// `(t_start, x_start)` until `T` or a fold.
pub fn continue_branch(
    scenario: &Scenario,
    t_start: f64,
    x_start: &DVector<f64>,
    index: usize,
    tol: &Tolerances,
) -> Result<Branch, SlowError> {
    let energy = scenario.energy();
    let horizon = scenario.horizon;
    let x0 = corrector(energy, t_start, x_start.clone(), tol).unwrap_or_else(|| x_start.clone());
    let lam0 = lambda_min(energy, t_start, &x0);
    let grad0 = energy.gradient(t_start, &x0).norm();
    if !(lam0 > 0.0) || grad0 > tol.newton_tol * tol.scale.max(1.0) * 10.0 {
        return Err(SlowError::NotStable { t: t_start, grad: grad0, lambda: lam0 });
    }
    let h_max = tol.branch_max_step * horizon;
    let h_min = tol.min_step * horizon;
    let trigger = tol.fold_trigger * lam0;

    let mut t = t_start;
    let mut x = x0;
    let mut lam = lam0;
    let mut dx = solve(&energy.hessian(t, &x), &(-energy.grad_t(t, &x))).ok_or(SlowError::HessianSolve { t })?;
    let mut branch = Branch {
        index,
        t: vec![t],
        x: vec![x.clone()],
        dx: vec![dx.clone()],
        lambda_min: vec![lam],
        end: EndReason::ReachedT,
        side: 1.0,
    };

    while t < horizon {
        if lam < trigger {
            let eig = jacobi_eigen(&energy.hessian(t, &x));
            let ell = eig.vector(0);
            let fold = refine_fold(scenario, t, &x, Some(&ell), tol)?;
            if fold.t < t {
                return Err(SlowError::FoldBehind { t_fold: fold.t, t_last: t });
            }
            branch.t.push(fold.t);
            branch.x.push(fold.x.clone());
            branch.dx.push(DVector::from_element(scenario.dim, f64::INFINITY));
            branch.lambda_min.push(lambda_min(energy, fold.t, &fold.x));
            branch.end = EndReason::Fold(fold);
            return Ok(branch);
        }
        let mut h = (h_max * (lam / lam0).powi(2).min(1.0)).min(horizon - t);
        loop {
            if h < h_min {
                return Err(SlowError::StepUnderflow { t });
            }
            let tn = if horizon - t - h <= h_min { horizon } else { t + h };
            let pred = &x + &dx * (tn - t);
            let accepted = corrector(energy, tn, pred.clone(), tol).and_then(|xn| {
                let ln = lambda_min(energy, tn, &xn);
                let jump = (&xn - &pred).norm();
                (ln > 0.0 && jump <= 0.1 * (&dx * (tn - t)).norm().max(1e-6)).then_some((xn, ln))
            });
            match accepted {
                Some((xn, ln)) => {
                    t = tn;
                    x = xn;
                    lam = ln;
                    break;
                }
                None => h *= 0.5,
            }
        }
        if lam >= trigger {
            dx = match solve(&energy.hessian(t, &x), &(-energy.grad_t(t, &x))) {
                Some(d) => d,
                None => return Err(SlowError::HessianSolve { t }),
            };
        } else {
            dx = solve(&energy.hessian(t, &x), &(-energy.grad_t(t, &x))).unwrap_or_else(|| DVector::zeros(scenario.dim));
        }
        branch.t.push(t);
        branch.x.push(x.clone());
        branch.dx.push(dx.clone());
        branch.lambda_min.push(lam);
    }
    Ok(branch)
}

/// The second branch `ū` meeting the fold, continued backward over
/// `[τ − r, τ]`.
pub fn sibling_branch(scenario: &Scenario, fold: &FoldPoint, r: f64, tol: &Tolerances) -> Result<Branch, SlowError> {
    let energy = scenario.energy();
    let t_lo = (fold.t - r).max(0.0);
    let span = fold.t - t_lo;
    let mut dt = (1e-10 * scenario.horizon).min(span * 1e-3);
    let mut rev_t = vec![fold.t];
    let mut rev_x = vec![fold.x.clone()];
    let mut rev_dx = vec![DVector::from_element(scenario.dim, f64::INFINITY)];
    let mut rev_l = vec![lambda_min(energy, fold.t, &fold.x)];
    let mut x_prev: Option<(f64, DVector<f64>, DVector<f64>)> = None;
    while dt <= span {
        let t = fold.t - dt;
        let guess = match &x_prev {
            None => sqrt_guess(fold, t, -1.0),
            Some((tp, xp, dp)) => xp + dp * (t - tp),
        };
        let x = corrector(energy, t, guess, tol).ok_or(SlowError::StepUnderflow { t })?;
        let d = solve(&energy.hessian(t, &x), &(-energy.grad_t(t, &x))).ok_or(SlowError::HessianSolve { t })?;
        rev_t.push(t);
        rev_x.push(x.clone());
        rev_dx.push(d.clone());
        rev_l.push(lambda_min(energy, t, &x));
        x_prev = Some((t, x, d));
        if dt == span {
            break;
        }
        dt = (dt * 1.15).min(span).max(dt + 1e-300);
        if dt > span * (1.0 - 1e-12) {
            dt = span;
        }
    }
    rev_t.reverse();
    rev_x.reverse();
    rev_dx.reverse();
    rev_l.reverse();
    Ok(Branch {
        index: 0,
        t: rev_t,
        x: rev_x,
        dx: rev_dx,
        lambda_min: rev_l,
        end: EndReason::Fold(fold.clone()),
        side: -1.0,
    })
}

/// Local neighbourhood of a fold on which the right-hand condition holds.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldGeometry {
    /// Distance from the fold point to the nearest other critical point.
    pub lambda_dist: f64,
    /// Ball radius `R`.
    pub big_r: f64,
    /// Time offset `r`.
    pub small_r: f64,
    /// Smallest `|∇f|` over the sampled `(τ, τ + r] × B̄(ξ, R)`.
    pub min_grad: f64,
    pub pass: bool,
}

fn right_condition(scenario: &Scenario, fold: &FoldPoint, r: f64, big_r: f64, tol: &Tolerances) -> (bool, f64) {
    let energy = scenario.energy();
    let mut pts = halton_ball(scenario.dim, big_r, 200);
    pts.push(DVector::zeros(scenario.dim));
    let mut min_grad = f64::INFINITY;
    let mut ok = true;
    for k in 1..=10 {
        let t = (fold.t + r * k as f64 / 10.0).min(scenario.horizon);
        for p in &pts {
            min_grad = min_grad.min(energy.gradient(t, &(&fold.x + p)).norm());
        }
        if find_critical_points(scenario, t, tol).iter().any(|c| (&c.x - &fold.x).norm() <= big_r) {
            ok = false;
        }
    }
    (ok && min_grad > 0.0, min_grad)
}

/// Picks `R = Λ/2` and the largest `r ≤ 0.1 T` (by halving) for which the
/// sampled right-hand condition holds.
pub fn fold_geometry(scenario: &Scenario, fold: &FoldPoint, tol: &Tolerances) -> FoldGeometry {
    let lambda_dist = crate::fast::nearest_other_critical(scenario, fold.t, &fold.x, tol).unwrap_or(f64::INFINITY);
    let big_r = 0.5 * lambda_dist.min(2.0 * (scenario.critical_ball_radius() + 1.0));
    let mut r = (0.1 * scenario.horizon).min(scenario.horizon - fold.t);
    let mut last = (false, 0.0);
    for _ in 0..30 {
        if r <= 0.0 {
            break;
        }
        last = right_condition(scenario, fold, r, big_r, tol);
        if last.0 {
            return FoldGeometry { lambda_dist, big_r, small_r: r, min_grad: last.1, pass: true };
        }
        r *= 0.5;
    }
    FoldGeometry { lambda_dist, big_r, small_r: r, min_grad: last.1, pass: false }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    /// Root of `x³ − x = t` in `(lo, hi)` by bisection.
    fn cubic_root(t: f64, lo: f64, hi: f64) -> f64 {
        let g = |x: f64| x * x * x - x - t;
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if g(a) * g(m) <= 0.0 {
                b = m;
            } else {
                a = m;
            }
        }
        0.5 * (a + b)
    }

    fn t1() -> f64 {
        2.0 / (3.0 * 3f64.sqrt())
    }

    #[test]
    fn dwell_branch_tracks_cubic_root() {
        let s = Scenario::builtin("dwell").unwrap();
        let tol = Tolerances::default();
        let b = continue_branch(&s, 0.0, &v(&[-1.0]), 0, &tol).unwrap();
        let fold = b.fold().expect("fold");
        assert!((fold.t - t1()).abs() < 1e-10);
        let x1 = -1.0 / 3f64.sqrt();
        for i in 0..b.t.len() - 1 {
            let want = cubic_root(b.t[i], -1.0 - 1e-9, x1);
            assert!((b.x[i][0] - want).abs() < 1e-8, "t={} {} {}", b.t[i], b.x[i][0], want);
        }
        for k in 0..50 {
            let t = t1() * k as f64 / 50.0;
            let x = b.eval(s.energy(), t, &tol).unwrap();
            assert!((x[0] - cubic_root(t, -1.0 - 1e-9, x1)).abs() < 1e-8);
            assert!(s.energy().gradient(t, &x).norm() <= tol.branch_tol);
        }
    }

    #[test]
    fn branch_residual_and_eigenvalue_exit() {
        let s = Scenario::builtin("dwell").unwrap();
        let tol = Tolerances::default();
        let b = continue_branch(&s, 0.0, &v(&[-1.0]), 0, &tol).unwrap();
        for (t, x) in b.t.iter().zip(&b.x) {
            assert!(s.energy().gradient(*t, x).norm() <= tol.branch_tol);
        }
        let n = b.t.len();
        let cut = b.t[0] + 0.9 * (b.t_end() - b.t[0]);
        for i in 0..n - 1 {
            if b.t[i] >= cut {
                assert!(b.lambda_min[i + 1] < b.lambda_min[i]);
            }
        }
        assert!(b.lambda_min[n - 1].abs() < 1e-5);
        assert!(b.t.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn square_root_law() {
        let s = Scenario::builtin("dwell").unwrap();
        let tol = Tolerances::default();
        let b = continue_branch(&s, 0.0, &v(&[-1.0]), 0, &tol).unwrap();
        let x1 = -1.0 / 3f64.sqrt();
        let ratios: Vec<f64> = [1e-4, 1e-5, 1e-6]
            .iter()
            .map(|d| (b.eval(s.energy(), t1() - d, &tol).unwrap()[0] - x1).abs() / d.sqrt())
            .collect();
        let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), r| (a.min(*r), b.max(*r)));
        assert!(hi / lo < 1.2, "{ratios:?}");
        assert!(lo > 0.0);
    }

    #[test]
    fn stationary_and_tracking_branches() {
        let tol = Tolerances::default();
        let q = Scenario::builtin("quadratic").unwrap();
        let b = continue_branch(&q, 0.0, &v(&[0.0]), 0, &tol).unwrap();
        assert_eq!(b.end, EndReason::ReachedT);
        assert_eq!(b.t_end(), 1.0);
        assert!(b.x.iter().all(|x| x[0] == 0.0));
        let tr = Scenario::builtin("tracking").unwrap();
        let b = continue_branch(&tr, 0.0, &v(&[0.0, 0.0]), 0, &tol).unwrap();
        assert_eq!(b.end, EndReason::ReachedT);
        for (t, x) in b.t.iter().zip(&b.x) {
            assert!((x[0] - t).abs() < 1e-12 && x[1].abs() < 1e-12);
        }
    }

    #[test]
    fn sibling_is_the_middle_root() {
        let s = Scenario::builtin("dwell").unwrap();
        let tol = Tolerances::default();
        let b = continue_branch(&s, 0.0, &v(&[-1.0]), 0, &tol).unwrap();
        let fold = b.fold().unwrap();
        let sib = sibling_branch(&s, fold, 0.1, &tol).unwrap();
        let x1 = -1.0 / 3f64.sqrt();
        for k in 0..20 {
            let t = t1() - 0.1 + 0.1 * k as f64 / 20.0;
            let x = sib.eval(s.energy(), t, &tol).unwrap();
            assert!((x[0] - cubic_root(t, x1, 1e-9)).abs() < 1e-8, "t={t}");
        }
        let slope = sib.slope(s.energy(), t1() - 1e-6, &tol).unwrap();
        assert!(slope.norm() > 1e2);
        let s2 = Scenario::builtin("dwell2d").unwrap();
        let b2 = continue_branch(&s2, 0.0, &v(&[-1.0, 0.0]), 0, &tol).unwrap();
        let sib2 = sibling_branch(&s2, b2.fold().unwrap(), 0.1, &tol).unwrap();
        assert!(sib2.x.iter().all(|x| x[1] == 0.0));
    }

    #[test]
    fn dwell_fold_geometry() {
        let s = Scenario::builtin("dwell").unwrap();
        let tol = Tolerances::default();
        let b = continue_branch(&s, 0.0, &v(&[-1.0]), 0, &tol).unwrap();
        let g = fold_geometry(&s, b.fold().unwrap(), &tol);
        assert!(g.pass);
        assert!((g.lambda_dist - 3f64.sqrt()).abs() < 1e-6);
        assert!(g.small_r > 0.0 && g.small_r <= 0.06 + 1e-15);
    }
}
