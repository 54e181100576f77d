//! Small dense linear algebra: symmetric eigen-decomposition by cyclic
//! Jacobi sweeps and a few helpers around nalgebra.

use nalgebra::{DMatrix, DVector};

/// Eigenpairs of a symmetric matrix, eigenvalues ascending, eigenvectors as
/// the columns of `vectors`.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    /// Index of the eigenvalue of smallest magnitude.
    pub fn nearest_zero(&self) -> usize {
        let mut best = 0;
        for i in 1..self.values.len() {
            if self.values[i].abs() < self.values[best].abs() {
                best = i;
            }
        }
        best
    }

    pub fn vector(&self, i: usize) -> DVector<f64> {
        self.vectors.column(i).into_owned()
    }
}

/// Cyclic Jacobi iteration; `a` must be symmetric (only the upper triangle
/// is read).
pub fn jacobi_eigen(a: &DMatrix<f64>) -> SymEigen {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "jacobi_eigen needs a square matrix");
    let mut m = DMatrix::from_fn(n, n, |i, j| if i <= j { a[(i, j)] } else { a[(j, i)] });
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = m.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if scale > 0.0 {
        for _sweep in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| m[(i, j)] * m[(i, j)])
                .sum();
            if off.sqrt() <= f64::EPSILON * 1e-2 * scale {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = m[(p, q)];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let mkp = m[(k, p)];
                        let mkq = m[(k, q)];
                        m[(k, p)] = c * mkp - s * mkq;
                        m[(k, q)] = s * mkp + c * mkq;
                    }
                    for k in 0..n {
                        let mpk = m[(p, k)];
                        let mqk = m[(q, k)];
                        m[(p, k)] = c * mpk - s * mqk;
                        m[(q, k)] = s * mpk + c * mqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| m[(i, i)]));
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        let mut e = v.column(i).into_owned();
        // deterministic orientation: largest-magnitude entry positive
        let (imax, _) = e.iter().enumerate().fold((0, 0.0f64), |acc, (k, x)| {
            if x.abs() > acc.1 + 1e-12 {
                (k, x.abs())
            } else {
                acc
            }
        });
        if e[imax] < 0.0 {
            e = -e;
        }
        vectors.set_column(col, &e);
    }
    SymEigen { values, vectors }
}

/// Solves `a x = b` by LU with partial pivoting; `None` if singular.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let x = a.clone().lu().solve(b)?;
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Ratio of smallest to largest singular value.
pub fn inverse_condition(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if max == 0.0 {
        0.0
    } else {
        min / max
    }
}

pub fn frobenius(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

const PRIMES: [u64; 9] = [2, 3, 5, 7, 11, 13, 17, 19, 23];

/// Radical inverse of `index` in the `k`-th prime base.
pub fn halton(index: u64, k: usize) -> f64 {
    let base = PRIMES[k];
    let mut f = 1.0;
    let mut r = 0.0;
    let mut i = index;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// First `count` Halton points of the cube `[-1, 1]^dim` that fall inside
/// the closed unit ball, scaled to `radius`.
pub fn halton_ball(dim: usize, radius: f64, count: usize) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(count);
    let mut index = 1u64;
    while out.len() < count {
        let p = DVector::from_fn(dim, |k, _| 2.0 * halton(index, k) - 1.0);
        if p.norm_squared() <= 1.0 {
            out.push(p * radius);
        }
        index += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn matches_nalgebra_symmetric_eigen(n in 1usize..7, seed in proptest::collection::vec(-5.0f64..5.0, 49)) {
            let a = DMatrix::from_fn(n, n, |i, j| {
                let (p, q) = if i <= j { (i, j) } else { (j, i) };
                seed[p * 7 + q]
            });
            let ours = jacobi_eigen(&a);
            let mut theirs: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().cloned().collect();
            theirs.sort_by(f64::total_cmp);
            for (x, y) in ours.values.iter().zip(&theirs) {
                prop_assert!((x - y).abs() < 1e-10 * (1.0 + y.abs()));
            }
            // A v = λ v and orthonormality
            for k in 0..n {
                let v = ours.vector(k);
                let r = &a * &v - &v * ours.values[k];
                prop_assert!(r.norm() < 1e-9);
                prop_assert!((v.norm() - 1.0).abs() < 1e-12);
            }
            let vtv = ours.vectors.transpose() * &ours.vectors;
            prop_assert!((vtv - DMatrix::identity(n, n)).norm() < 1e-10);
        }
    }

    #[test]
    fn halton_points_stay_in_ball() {
        assert_eq!(halton(1, 0), 0.5);
        assert_eq!(halton(3, 1), 1.0 / 9.0);
        let pts = halton_ball(3, 2.0, 50);
        assert_eq!(pts.len(), 50);
        assert!(pts.iter().all(|p| p.norm() <= 2.0));
    }

    #[test]
    fn diagonal_input_keeps_unit_vectors() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.577]);
        let e = jacobi_eigen(&a);
        assert_eq!(e.values[0], 0.0);
        assert_eq!(e.vector(0), DVector::from_vec(vec![1.0, 0.0]));
    }
}
