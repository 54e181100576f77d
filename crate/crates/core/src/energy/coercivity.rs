use super::poly::Poly;
use super::Scenario;
use crate::linalg::halton_ball;
use nalgebra::DVector;

/// Sampling of `[0, T] × B(0, R)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub time_points: usize,
    /// Interior points, low-discrepancy.
    pub ball_points: usize,
    /// Radii of the concentric shells sampled in addition to the interior.
    pub shells: usize,
    /// Directions per shell.
    pub directions: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { time_points: 21, ball_points: 400, shells: 16, directions: 64 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoercivityReport {
    pub radius: f64,
    /// `min ∇f·x − c0|x|² + a0` over the samples.
    pub min_margin: f64,
    pub argmin_t: f64,
    pub argmin_x: DVector<f64>,
    pub samples: usize,
    pub pass: bool,
    /// Leading-degree certificate for polynomial energies.
    pub polynomial_certified: bool,
    /// Critical points lie in `B(0, √(a0/c0))`.
    pub ball_radius: f64,
    /// Fitted lower bound `f ≥ c̃|x|² − ã` for `|x| ≥ M`, on the samples.
    pub fitted_m: f64,
    pub fitted_c: f64,
    pub fitted_a: f64,
}

fn directions(dim: usize, count: usize) -> Vec<DVector<f64>> {
    if dim == 1 {
        return vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)];
    }
    let mut out: Vec<DVector<f64>> = Vec::new();
    for k in 0..dim {
        for s in [1.0, -1.0] {
            let mut e = DVector::zeros(dim);
            e[k] = s;
            out.push(e);
        }
    }
    for p in halton_ball(dim, 1.0, count) {
        let n = p.norm();
        if n > 1e-3 {
            out.push(p / n);
        }
    }
    out
}

/// Samples the coercivity inequality of the scenario's energy on a grid over
/// `[0, T] × B(0, radius)`.
pub fn check_coercivity(scenario: &Scenario, radius: f64, grid: GridSpec) -> CoercivityReport {
    let energy = scenario.energy();
    let n = scenario.dim;
    let mut points = halton_ball(n, radius, grid.ball_points);
    points.push(DVector::zeros(n));
    let dirs = directions(n, grid.directions);
    for s in 1..=grid.shells {
        let r = radius * s as f64 / grid.shells as f64;
        points.extend(dirs.iter().map(|d| d * r));
    }

    let m = (radius / 2.0).max(scenario.critical_ball_radius());
    let c_fit = scenario.c0 / 2.0;
    let mut a_fit = f64::NEG_INFINITY;

    let nt = grid.time_points.max(2);
    let mut best = (f64::INFINITY, 0.0, DVector::zeros(n));
    let mut samples = 0;
    for i in 0..nt {
        let t = scenario.horizon * i as f64 / (nt - 1) as f64;
        for x in &points {
            let g = energy.gradient(t, x);
            let margin = g.dot(x) - scenario.c0 * x.norm_squared() + scenario.a0;
            samples += 1;
            if margin < best.0 {
                best = (margin, t, x.clone());
            }
            if x.norm() >= m {
                a_fit = a_fit.max(c_fit * x.norm_squared() - energy.value(t, x));
            }
        }
    }
    let polynomial_certified = Poly::from_expr(energy.expr(), n)
        .map(|p| p.leading_degree_certified())
        .unwrap_or(false);
    CoercivityReport {
        radius,
        min_margin: best.0,
        argmin_t: best.1,
        argmin_x: best.2,
        samples,
        pass: best.0 >= 0.0,
        polynomial_certified,
        ball_radius: scenario.critical_ball_radius(),
        fitted_m: m,
        fitted_c: c_fit,
        fitted_a: a_fit.max(0.0),
    }
}
