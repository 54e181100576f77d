//! The piecewise limit evolution: stable branches joined by heteroclinic
//! jumps at folds.

use crate::config::Tolerances;
use crate::critical::{transversality, FoldPoint, TransversalityReport, Verdict};
use crate::energy::Scenario;
use crate::fast::{check_hp4, heteroclinic_from_fold, FastError, HetOptions, Heteroclinic, Hp4Report};
use crate::slow::{continue_branch, fold_geometry, Branch, EndReason, FoldGeometry, SlowError};
use nalgebra::DVector;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EvolutionError {
    #[error("branch {index}: {source}")]
    Slow { index: usize, source: SlowError },
    #[error("fold {index} at t={t:.10} violates transversality (b={b:.3e}, c={c:.3e})")]
    Transversality { index: usize, t: f64, b: f64, c: f64 },
    #[error("fold {index} at t={t:.10}: b={b:.3e} and c={c:.3e} have opposite signs")]
    SignMismatch { index: usize, t: f64, b: f64, c: f64 },
    #[error("fold {index}: {source}")]
    Fast { index: usize, source: FastError },
    #[error("jump {index} lands on a non-minimum (λ_min={lambda_min:.3e})")]
    Hp4 { index: usize, lambda_min: f64 },
    #[error("more than {0} branches")]
    BranchCap(usize),
    #[error("branch {index} starts {distance:.3e} away from the landing point")]
    Landing { index: usize, distance: f64 },
}

impl EvolutionError {
    /// Assumption violations as opposed to numerical breakdowns.
    pub fn is_assumption(&self) -> bool {
        matches!(
            self,
            EvolutionError::Transversality { .. } | EvolutionError::SignMismatch { .. } | EvolutionError::Hp4 { .. }
        ) || matches!(self, EvolutionError::Fast { source: FastError::DegenerateLanding { .. }, .. })
    }
}

#[derive(Clone, Debug)]
pub struct Jump {
    pub fold: FoldPoint,
    pub transversality: TransversalityReport,
    pub het: Heteroclinic,
    pub hp4: Hp4Report,
    pub geometry: FoldGeometry,
}

impl Jump {
    pub fn time(&self) -> f64 {
        self.fold.t
    }

    pub fn landing(&self) -> &DVector<f64> {
        &self.het.w_inf
    }
}

#[derive(Clone, Debug)]
pub struct PiecewiseEvolution {
    pub horizon: f64,
    pub branches: Vec<Branch>,
    pub jumps: Vec<Jump>,
}

/// A polyline in `(t, x)` space.
#[derive(Clone, Debug, Default)]
pub struct Polyline {
    pub t: Vec<f64>,
    pub x: Vec<DVector<f64>>,
}

impl PiecewiseEvolution {
    pub fn k(&self) -> usize {
        self.branches.len()
    }

    pub fn jump_times(&self) -> Vec<f64> {
        self.jumps.iter().map(Jump::time).collect()
    }

    fn branch_index(&self, t: f64) -> usize {
        self.jumps.iter().take_while(|j| j.time() <= t).count()
    }

    /// `u(t)`; at a jump time the right limit.
    pub fn eval_u(&self, scenario: &Scenario, t: f64, tol: &Tolerances) -> Result<DVector<f64>, SlowError> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(SlowError::OutOfRange { t, lo: 0.0, hi: self.horizon });
        }
        let b = &self.branches[self.branch_index(t)];
        b.eval(scenario.energy(), t.max(b.t_start()), tol)
    }

    /// Left limit `u(t⁻)`.
    pub fn eval_u_left(&self, scenario: &Scenario, t: f64, tol: &Tolerances) -> Result<DVector<f64>, SlowError> {
        match self.jumps.iter().position(|j| j.time() == t) {
            Some(i) => Ok(self.branches[i].x.last().unwrap().clone()),
            None => self.eval_u(scenario, t, tol),
        }
    }

    /// The completed graph: one polyline per branch, refined to time steps of
    /// at most `max_dt`, and one per jump at fixed time.
    pub fn graph(&self, scenario: &Scenario, tol: &Tolerances, max_dt: f64) -> (Vec<Polyline>, Vec<Polyline>) {
        let energy = scenario.energy();
        let mut branches = Vec::new();
        for b in &self.branches {
            let mut pl = Polyline::default();
            for w in 0..b.t.len() {
                if w > 0 {
                    let (a, c) = (b.t[w - 1], b.t[w]);
                    let m = ((c - a) / max_dt).ceil() as usize;
                    for k in 1..m {
                        let t = a + (c - a) * k as f64 / m as f64;
                        if let Ok(x) = b.eval(energy, t, tol) {
                            pl.t.push(t);
                            pl.x.push(x);
                        }
                    }
                }
                pl.t.push(b.t[w]);
                pl.x.push(b.x[w].clone());
            }
            branches.push(pl);
        }
        let mut jumps = Vec::new();
        for j in &self.jumps {
            let mut pl = Polyline::default();
            pl.t.push(j.time());
            pl.x.push(j.fold.x.clone());
            for v in &j.het.v {
                pl.t.push(j.time());
                pl.x.push(v.clone());
            }
            pl.t.push(j.time());
            pl.x.push(j.het.w_inf.clone());
            jumps.push(pl);
        }
        (branches, jumps)
    }
}

/// Assembles the limit evolution from `y0`: continue, refine the fold,
/// check it, jump along the heteroclinic, restart at the landing point.
pub fn build_slow_fast_evolution(
    scenario: &Scenario,
    tol: &Tolerances,
    opts: HetOptions,
) -> Result<PiecewiseEvolution, EvolutionError> {
    let cap = tol.max_branches.round() as usize;
    let mut branches: Vec<Branch> = Vec::new();
    let mut jumps: Vec<Jump> = Vec::new();
    let mut t = 0.0;
    let mut x = scenario.y0.clone();
    loop {
        let index = branches.len();
        if index >= cap {
            return Err(EvolutionError::BranchCap(cap));
        }
        let branch = continue_branch(scenario, t, &x, index, tol).map_err(|source| EvolutionError::Slow { index, source })?;
        if index > 0 {
            let distance = (&branch.x[0] - &x).norm();
            if distance > tol.landing_tol {
                return Err(EvolutionError::Landing { index, distance });
            }
        }
        let fold = match &branch.end {
            EndReason::ReachedT => {
                branches.push(branch);
                break;
            }
            EndReason::Fold(f) => f.clone(),
        };
        branches.push(branch);
        let rep = transversality(scenario, &fold, tol);
        if rep.verdict == Verdict::Reject {
            return Err(EvolutionError::Transversality { index, t: fold.t, b: rep.b, c: rep.c });
        }
        if !rep.same_sign {
            return Err(EvolutionError::SignMismatch { index, t: fold.t, b: rep.b, c: rep.c });
        }
        let het = heteroclinic_from_fold(scenario, &fold, tol, opts).map_err(|source| EvolutionError::Fast { index, source })?;
        let hp4 = check_hp4(scenario, &het, tol);
        if !hp4.pass {
            return Err(EvolutionError::Hp4 { index, lambda_min: hp4.lambda_min });
        }
        let geometry = fold_geometry(scenario, &fold, tol);
        t = fold.t;
        x = het.w_inf.clone();
        jumps.push(Jump { fold, transversality: rep, het, hp4, geometry });
    }
    Ok(PiecewiseEvolution { horizon: scenario.horizon, branches, jumps })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dwell_has_two_branches() {
        let s = Scenario::builtin("dwell").unwrap();
        let tol = Tolerances::default();
        let pe = build_slow_fast_evolution(&s, &tol, HetOptions::default()).unwrap();
        assert_eq!(pe.k(), 2);
        let t1 = 2.0 / (3.0 * 3f64.sqrt());
        assert!((pe.jump_times()[0] - t1).abs() < 1e-10);
        let y1 = 2.0 / 3f64.sqrt();
        let tj = pe.jump_times()[0];
        assert!((pe.eval_u(&s, tj, &tol).unwrap()[0] - y1).abs() < 1e-8);
        assert!((pe.eval_u_left(&s, tj, &tol).unwrap()[0] + 1.0 / 3f64.sqrt()).abs() < 1e-8);
        assert_eq!(pe.eval_u(&s, 0.0, &tol).unwrap()[0], -1.0);
        assert!((pe.eval_u(&s, 0.2, &tol).unwrap()[0] + 0.878885).abs() < 1e-5);
        assert_eq!(pe.branches[1].t_end(), 0.6);
        assert!(pe.jumps[0].geometry.pass);
    }

    #[test]
    fn quadratic_has_no_jump() {
        let s = Scenario::builtin("quadratic").unwrap();
        let tol = Tolerances::default();
        let pe = build_slow_fast_evolution(&s, &tol, HetOptions::default()).unwrap();
        assert_eq!(pe.k(), 1);
        assert!(pe.jumps.is_empty());
        assert_eq!(pe.eval_u(&s, 0.7, &tol).unwrap()[0], 0.0);
    }

    #[test]
    fn oscillating_has_four_branches() {
        let s = Scenario::builtin("oscillating").unwrap();
        let tol = Tolerances::default();
        let pe = build_slow_fast_evolution(&s, &tol, HetOptions::default()).unwrap();
        assert_eq!(pe.k(), 4);
        let times = pe.jump_times();
        assert!(times.windows(2).all(|w| w[1] > w[0]));
        // jumps alternate direction
        let signs: Vec<f64> = pe.jumps.iter().map(|j| (j.landing()[0] - j.fold.x[0]).signum()).collect();
        assert_eq!(signs, [1.0, -1.0, 1.0]);
    }

    #[test]
    fn saddle_landing_is_an_assumption_failure() {
        let s = Scenario::builtin("saddle_landing").unwrap();
        let err = build_slow_fast_evolution(&s, &Tolerances::default(), HetOptions::default()).unwrap_err();
        assert!(matches!(err, EvolutionError::Hp4 { .. }), "{err}");
        assert!(err.is_assumption());
    }
}
