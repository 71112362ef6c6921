//! Symmetric tridiagonal matrices.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Symmetric tridiagonal matrix stored as its diagonal and first
/// off-diagonal (`off[i]` couples rows `i` and `i + 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn zeros(n: usize) -> Self {
        SymTridiagonal {
            diag: vec![0.0; n],
            off: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.off[i] * x[i + 1];
            }
            out[i] = acc;
        }
        out
    }

    /// Solves `A x = rhs` with an `LDLᵀ` (Thomas) sweep.
    ///
    /// Fails with [`Error::NotConvex`] when a pivot is not strictly positive,
    /// which for a Hessian means the objective is not strictly convex.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        if rhs.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: rhs.len(),
            });
        }
        if n == 0 {
            return Ok(Vec::new());
        }
        let mut pivots = vec![0.0; n];
        let mut ratios = vec![0.0; n.saturating_sub(1)];
        let mut z = vec![0.0; n];

        pivots[0] = self.diag[0];
        z[0] = rhs[0];
        for i in 1..n {
            let prev = pivots[i - 1];
            if !(prev > 0.0) {
                return Err(Error::NotConvex { iteration: 0 });
            }
            let r = self.off[i - 1] / prev;
            ratios[i - 1] = r;
            pivots[i] = self.diag[i] - r * self.off[i - 1];
            z[i] = rhs[i] - r * z[i - 1];
        }
        if !(pivots[n - 1] > 0.0) {
            return Err(Error::NotConvex { iteration: 0 });
        }

        let mut x = vec![0.0; n];
        x[n - 1] = z[n - 1] / pivots[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = z[i] / pivots[i] - ratios[i] * x[i + 1];
        }
        Ok(x)
    }

    /// Number of eigenvalues strictly below `t` (Sturm sequence count).
    pub fn count_below(&self, t: f64) -> usize {
        let mut count = 0;
        let mut q = 1.0;
        for i in 0..self.len() {
            let coupling = if i == 0 { 0.0 } else { self.off[i - 1] };
            let prev = if i == 0 { 1.0 } else { q };
            let prev = if prev == 0.0 { f64::EPSILON } else { prev };
            q = self.diag[i] - t - coupling * coupling / prev;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// Smallest eigenvalue by bisection on the Sturm count.
    pub fn min_eigenvalue(&self) -> f64 {
        if self.is_empty() {
            return f64::NAN;
        }
        // Gershgorin bounds
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.len() {
            let mut radius = 0.0;
            if i > 0 {
                radius += self.off[i - 1].abs();
            }
            if i < self.off.len() {
                radius += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - radius);
            hi = hi.max(self.diag[i] + radius);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) >= 1 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SymTridiagonal {
        SymTridiagonal {
            diag: vec![4.0, 5.0, 3.0, 6.0],
            off: vec![-1.0, 2.0, 0.5],
        }
    }

    #[test]
    fn solve_reproduces_rhs() {
        let a = sample();
        let rhs = [1.0, -2.0, 0.5, 3.0];
        let x = a.solve(&rhs).unwrap();
        let back = a.mul_vec(&x);
        for (b, r) in back.iter().zip(rhs.iter()) {
            assert!((b - r).abs() <= 1e-12 * (1.0 + r.abs()));
        }
    }

    #[test]
    fn solve_rejects_indefinite() {
        let a = SymTridiagonal {
            diag: vec![1.0, 1.0],
            off: vec![2.0],
        };
        assert!(matches!(a.solve(&[1.0, 1.0]), Err(Error::NotConvex { .. })));
    }

    #[test]
    fn min_eigenvalue_of_two_by_two() {
        // [[2, 1], [1, 2]] has eigenvalues 1 and 3
        let a = SymTridiagonal {
            diag: vec![2.0, 2.0],
            off: vec![1.0],
        };
        assert!((a.min_eigenvalue() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn min_eigenvalue_of_discrete_laplacian() {
        // tridiag(-1, 2, -1) of size n: 2 - 2 cos(pi / (n + 1))
        let n = 12;
        let a = SymTridiagonal {
            diag: vec![2.0; n],
            off: vec![-1.0; n - 1],
        };
        let expected = 2.0 - 2.0 * libm::cos(core::f64::consts::PI / (n as f64 + 1.0));
        assert!((a.min_eigenvalue() - expected).abs() < 1e-12);
    }
}
