//! Hermite interpolation between accepted steps.

use nalgebra::DVector;

/// Cubic Hermite on `[t0, t1]` from values and first derivatives.
pub fn cubic(t0: f64, t1: f64, y0: &DVector<f64>, y1: &DVector<f64>, d0: &DVector<f64>, d1: &DVector<f64>, t: f64) -> DVector<f64> {
    let h = t1 - t0;
    if h == 0.0 {
        return y0.clone();
    }
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    y0 * h00 + d0 * (h * h10) + y1 * h01 + d1 * (h * h11)
}

/// Derivative of [`cubic`] with respect to `t`.
pub fn cubic_derivative(
    t0: f64,
    t1: f64,
    y0: &DVector<f64>,
    y1: &DVector<f64>,
    d0: &DVector<f64>,
    d1: &DVector<f64>,
    t: f64,
) -> DVector<f64> {
    let h = t1 - t0;
    if h == 0.0 {
        return d0.clone();
    }
    let s = (t - t0) / h;
    let s2 = s * s;
    let h00 = (6.0 * s2 - 6.0 * s) / h;
    let h10 = 3.0 * s2 - 4.0 * s + 1.0;
    let h01 = (-6.0 * s2 + 6.0 * s) / h;
    let h11 = 3.0 * s2 - 2.0 * s;
    y0 * h00 + d0 * h10 + y1 * h01 + d1 * h11
}

/// Quintic Hermite on `[t0, t1]` from values, first and second derivatives.
#[allow(clippy::too_many_arguments)]
pub fn quintic(
    t0: f64,
    t1: f64,
    y0: &DVector<f64>,
    y1: &DVector<f64>,
    d0: &DVector<f64>,
    d1: &DVector<f64>,
    a0: &DVector<f64>,
    a1: &DVector<f64>,
    t: f64,
) -> DVector<f64> {
    let h = t1 - t0;
    if h == 0.0 {
        return y0.clone();
    }
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let s4 = s3 * s;
    let s5 = s4 * s;
    let b0 = 1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5;
    let b1 = s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5;
    let b2 = 0.5 * (s2 - 3.0 * s3 + 3.0 * s4 - s5);
    let b3 = 0.5 * (s3 - 2.0 * s4 + s5);
    let b4 = -4.0 * s3 + 7.0 * s4 - 3.0 * s5;
    let b5 = 10.0 * s3 - 15.0 * s4 + 6.0 * s5;
    y0 * b0 + d0 * (h * b1) + a0 * (h * h * b2) + a1 * (h * h * b3) + d1 * (h * b4) + y1 * b5
}

/// Index `i` with `grid[i] ≤ t ≤ grid[i + 1]`, clamped to the grid.
pub fn bracket(grid: &[f64], t: f64) -> usize {
    debug_assert!(grid.len() >= 2);
    let i = grid.partition_point(|&g| g <= t);
    i.saturating_sub(1).min(grid.len() - 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    #[test]
    fn cubic_reproduces_cubics() {
        let p = |t: f64| t * t * t - 2.0 * t + 1.0;
        let dp = |t: f64| 3.0 * t * t - 2.0;
        let (a, b) = (0.3, 1.7);
        for t in [0.3, 0.5, 1.0, 1.7] {
            let y = cubic(a, b, &v(p(a)), &v(p(b)), &v(dp(a)), &v(dp(b)), t);
            assert!((y[0] - p(t)).abs() < 1e-13);
            let d = cubic_derivative(a, b, &v(p(a)), &v(p(b)), &v(dp(a)), &v(dp(b)), t);
            assert!((d[0] - dp(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn quintic_reproduces_quintics() {
        let p = |t: f64| t.powi(5) - t.powi(3) + 0.5;
        let dp = |t: f64| 5.0 * t.powi(4) - 3.0 * t * t;
        let ddp = |t: f64| 20.0 * t.powi(3) - 6.0 * t;
        let (a, b) = (-0.4, 0.9);
        for t in [-0.4, 0.0, 0.33, 0.9] {
            let y = quintic(a, b, &v(p(a)), &v(p(b)), &v(dp(a)), &v(dp(b)), &v(ddp(a)), &v(ddp(b)), t);
            assert!((y[0] - p(t)).abs() < 1e-13);
        }
    }

    #[test]
    fn bracket_clamps() {
        let g = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(bracket(&g, -1.0), 0);
        assert_eq!(bracket(&g, 0.0), 0);
        assert_eq!(bracket(&g, 1.5), 1);
        assert_eq!(bracket(&g, 3.0), 2);
        assert_eq!(bracket(&g, 9.0), 2);
    }
}
