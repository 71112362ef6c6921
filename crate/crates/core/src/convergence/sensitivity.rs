//! Sensitivity inequalities for the tail-anchored optimum `X̃ⁿ(u)`:
//!
//! ```text
//! ‖∂X̃_{1:j}‖² ≤ (2/κ) |∂²α(X̃_j, X̃_{j+1}) ∂X̃_{j+1} ∂X̃_j|,   j < n
//! ‖∂X̃_{1:n}‖² ≤ (2/κ) |∂²α(X̃_n, u) ∂X̃_n|
//! ```
//!
//! with `∂` the derivative in the anchor `u` and `∂²α` the mixed partial.

use alloc::vec::Vec;

use crate::map::{influence_jacobian, SolverConfig};
use crate::model::ContinuousHmm;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma34Row {
    /// 1-based index of the inequality; `j = n` is the tail inequality.
    pub j: usize,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`.
    pub residual: f64,
    pub tol: f64,
}

impl Lemma34Row {
    pub fn pass(&self) -> bool {
        self.residual >= -self.tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma34Report {
    pub u: f64,
    pub kappa: f64,
    pub rows: Vec<Lemma34Row>,
    /// Finite-difference Jacobian `∂X̃ⁿ/∂u`.
    pub jacobian: Vec<f64>,
    pub path: Vec<f64>,
    pub richardson_ok: bool,
}

impl Lemma34Report {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(Lemma34Row::pass)
    }

    pub fn worst_margin(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.residual + r.tol)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Evaluates both inequalities at anchor `u`, with tolerance
/// `rel_tol·(1 + |rhs|)` on each residual.
pub fn check_lemma34<M: ContinuousHmm + ?Sized>(
    model: &M,
    y: &[f64],
    u: f64,
    config: &SolverConfig,
    rel_tol: f64,
) -> Result<Lemma34Report> {
    let kappa = model.kappa();
    if !(kappa > 0.0) {
        return Err(Error::invalid(
            "kappa",
            "observation cost must be strongly convex",
        ));
    }
    let jac = influence_jacobian(model, y, u, config)?;
    let x = &jac.center.path;
    let d = &jac.values;
    let n = y.len();
    let mut rows = Vec::with_capacity(n);
    let mut sq = 0.0;
    for j in 0..n {
        sq += d[j] * d[j];
        let rhs = if j + 1 < n {
            let c = model.trans_cost(x[j], x[j + 1]).duv;
            2.0 / kappa * (c * d[j + 1] * d[j]).abs()
        } else {
            let c = model.trans_cost(x[j], u).duv;
            2.0 / kappa * (c * d[j]).abs()
        };
        rows.push(Lemma34Row {
            j: j + 1,
            lhs: sq,
            rhs,
            residual: rhs - sq,
            tol: rel_tol * (1.0 + rhs.abs()),
        });
    }
    Ok(Lemma34Report {
        u,
        kappa,
        rows,
        richardson_ok: jac.richardson_ok(),
        jacobian: jac.values,
        path: jac.center.path,
    })
}

/// Nodes and weights of the 5-point Gauss–Legendre rule on `[0, 1]`.
const GAUSS5: [(f64, f64); 5] = [
    (0.046_910_077_030_668_0, 0.118_463_442_528_094_5),
    (0.230_765_344_947_158_5, 0.239_314_335_249_683_2),
    (0.5, 0.284_444_444_444_444_4),
    (0.769_234_655_052_841_5, 0.239_314_335_249_683_2),
    (0.953_089_922_969_332_0, 0.118_463_442_528_094_5),
];

/// The inequalities along the segment `u(s) = (1-s)·u0 + s·u1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentReport {
    /// Reports at `s = 0, 1/2, 1`.
    pub points: Vec<(f64, Lemma34Report)>,
    /// `∫₀¹ |d/ds X̃₁(u(s))| ds` by the 5-point Gauss rule; bounds the shift
    /// of the first coordinate between the two anchors.
    pub integrated_b1: f64,
    /// `|X̃₁(u1) - X̃₁(u0)|`, which `integrated_b1` must dominate.
    pub first_coordinate_shift: f64,
}

impl SegmentReport {
    pub fn all_pass(&self) -> bool {
        self.points.iter().all(|(_, r)| r.all_pass())
    }
}

pub fn check_lemma34_segment<M: ContinuousHmm + ?Sized>(
    model: &M,
    y: &[f64],
    u0: f64,
    u1: f64,
    config: &SolverConfig,
    rel_tol: f64,
) -> Result<SegmentReport> {
    let mut points = Vec::with_capacity(3);
    for s in [0.0, 0.5, 1.0] {
        let u = (1.0 - s) * u0 + s * u1;
        points.push((s, check_lemma34(model, y, u, config, rel_tol)?));
    }
    let mut integrated_b1 = 0.0;
    for (s, w) in GAUSS5 {
        let u = (1.0 - s) * u0 + s * u1;
        let jac = influence_jacobian(model, y, u, config)?;
        integrated_b1 += w * (u1 - u0).abs() * jac.values[0].abs();
    }
    let first_coordinate_shift = (points[2].1.path[0] - points[0].1.path[0]).abs();
    Ok(SegmentReport {
        points,
        integrated_b1,
        first_coordinate_shift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LinearGaussian;

    #[test]
    fn gaussian_single_step() {
        let m = LinearGaussian::standard();
        let r = check_lemma34(&m, &[0.7], 1.3, &SolverConfig::default(), 1e-4).unwrap();
        let row = r.rows[0];
        assert!((row.lhs - 1.0 / 9.0).abs() < 1e-8);
        assert!((row.rhs - 2.0 / 3.0).abs() < 1e-8);
        assert!(r.all_pass());
    }

    #[test]
    fn separable_transition_is_tight_at_zero() {
        let m = LinearGaussian::new(0.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let r = check_lemma34(&m, &[0.1, 0.5, -0.3], 2.0, &SolverConfig::default(), 1e-4).unwrap();
        for row in &r.rows {
            assert_eq!(row.lhs, 0.0);
            assert_eq!(row.rhs, 0.0);
        }
    }

    #[test]
    fn segment_integral_dominates_shift() {
        let m = LinearGaussian::stationary(0.8, 1.0).unwrap();
        let y = [0.4, -1.0, 0.2, 1.7];
        let s = check_lemma34_segment(&m, &y, -1.0, 2.0, &SolverConfig::default(), 1e-4).unwrap();
        assert!(s.all_pass());
        // linear model: the Jacobian is constant, so the integral is exact
        assert!((s.integrated_b1 - s.first_coordinate_shift).abs() < 1e-6);
    }
}
