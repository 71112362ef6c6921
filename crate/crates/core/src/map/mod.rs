//! Continuous-state MAP paths.
//!
//! `h_n` couples only neighbouring coordinates, so its Hessian is tridiagonal
//! and each Newton iteration costs `O(n)`. Every model satisfying the
//! log-concavity assumptions has a strongly convex `h_n` and therefore a
//! unique minimizer; no tie-breaking is needed.

mod laplace;

use alloc::vec::Vec;

use crate::model::{h_grad_hess, h_value, ContinuousHmm, Cost1, Cost2};
use crate::{Error, Result};

pub use laplace::{laplace_coordinate_descent, laplace_objective, CoordinateDescent, LaplaceMapDp};

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 80;
const POLISH_STEPS: usize = 3;
/// Argument shifts below this (relative to `1 + |t|`) use the trapezoid rule
/// in [`grad_change`].
const SMALL_SHIFT: f64 = 1e-5;
const INCREMENT_STEPS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub grad_tol: f64,
    pub max_iters: usize,
    pub line_search_shrink: f64,
    pub fd_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            grad_tol: 1e-10,
            max_iters: 200,
            line_search_shrink: 0.5,
            fd_step: 1e-5,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return Err(Error::invalid("grad_tol", "must be positive"));
        }
        if self.max_iters < 1 {
            return Err(Error::invalid("max_iters", "must be at least 1"));
        }
        if !(self.line_search_shrink > 0.0 && self.line_search_shrink < 1.0) {
            return Err(Error::invalid("line_search_shrink", "must lie in (0, 1)"));
        }
        if !(self.fd_step > 0.0) {
            return Err(Error::invalid("fd_step", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapSolution {
    pub path: Vec<f64>,
    pub objective: f64,
    pub grad_inf_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Observation-anchored starting point `x_m = argmin_x γ(x, y_m)`.
pub fn initial_path<M: ContinuousHmm + ?Sized>(model: &M, y: &[f64]) -> Vec<f64> {
    y.iter()
        .map(|&ym| {
            let x = model.obs_argmin(ym);
            if x.is_finite() {
                x
            } else {
                0.0
            }
        })
        .collect()
}

struct Newton<'a, M: ?Sized> {
    model: &'a M,
    y: &'a [f64],
    tail: Option<f64>,
}

impl<M: ContinuousHmm + ?Sized> Newton<'_, M> {
    fn value(&self, x: &[f64]) -> f64 {
        h_value(self.model, x, self.y, self.tail)
    }

    fn run(&self, mut x: Vec<f64>, config: &SolverConfig) -> Result<MapSolution> {
        config.validate()?;
        let n = x.len();
        let mut f = self.value(&x);
        let (mut grad, mut hess) = h_grad_hess(self.model, &x, self.y, self.tail);
        let mut gnorm = inf_norm(&grad);
        let mut iterations = 0;
        let mut trial = Vec::with_capacity(n);

        while gnorm > config.grad_tol {
            if iterations >= config.max_iters {
                return Ok(MapSolution {
                    path: x,
                    objective: f,
                    grad_inf_norm: gnorm,
                    iterations,
                    converged: false,
                });
            }
            iterations += 1;
            let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
            let step = hess.solve(&rhs).map_err(|_| Error::NotConvex {
                iteration: iterations,
            })?;
            let slope = dot(&grad, &step);
            if !(slope < 0.0) {
                if slope == 0.0 {
                    break;
                }
                return Err(Error::NotConvex {
                    iteration: iterations,
                });
            }

            // Armijo backtracking; a few ulps of slack because near the
            // optimum the predicted decrease falls below rounding of f.
            let slack = 16.0 * f64::EPSILON * (1.0 + f.abs());
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..MAX_HALVINGS {
                trial.clear();
                trial.extend(x.iter().zip(&step).map(|(xi, si)| xi + t * si));
                let ft = self.value(&trial);
                if ft <= f + ARMIJO * t * slope || (ft <= f + slack && -slope * t <= slack) {
                    accepted = Some(ft);
                    break;
                }
                t *= config.line_search_shrink;
            }
            let Some(ft) = accepted else {
                // no representable decrease left
                break;
            };
            core::mem::swap(&mut x, &mut trial);
            f = ft;
            let gh = h_grad_hess(self.model, &x, self.y, self.tail);
            grad = gh.0;
            hess = gh.1;
            gnorm = inf_norm(&grad);
        }

        let converged = gnorm <= config.grad_tol;
        if converged {
            self.polish(&mut x, &mut f, &mut gnorm);
        }
        Ok(MapSolution {
            path: x,
            objective: f,
            grad_inf_norm: gnorm,
            iterations,
            converged,
        })
    }

    /// Extra full Newton steps kept only while they shrink the gradient;
    /// brings a converged iterate to rounding level.
    fn polish(&self, x: &mut Vec<f64>, f: &mut f64, gnorm: &mut f64) {
        for _ in 0..POLISH_STEPS {
            let (grad, hess) = h_grad_hess(self.model, x, self.y, self.tail);
            let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
            let Ok(step) = hess.solve(&rhs) else { return };
            let cand: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
            let (cg, _) = h_grad_hess(self.model, &cand, self.y, self.tail);
            let cnorm = inf_norm(&cg);
            if cnorm < *gnorm {
                *x = cand;
                *f = self.value(x);
                *gnorm = cnorm;
            } else {
                return;
            }
        }
    }
}

fn check_obs(y: &[f64]) -> Result<()> {
    if y.is_empty() {
        return Err(Error::Empty("observations"));
    }
    if let Some(&bad) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::OutOfDomain {
            value: bad,
            domain: "finite reals",
        });
    }
    Ok(())
}

/// `argmin_x h_n(x)` by damped Newton from the observation-anchored start.
///
/// A non-converged run is returned with `converged = false`; a Newton
/// direction that fails to descend is reported as [`Error::NotConvex`].
pub fn solve_map<M: ContinuousHmm + ?Sized>(
    model: &M,
    y: &[f64],
    config: &SolverConfig,
) -> Result<MapSolution> {
    check_obs(y)?;
    solve_map_from(model, y, initial_path(model, y), config)
}

/// As [`solve_map`], starting from `start`.
pub fn solve_map_from<M: ContinuousHmm + ?Sized>(
    model: &M,
    y: &[f64],
    start: Vec<f64>,
    config: &SolverConfig,
) -> Result<MapSolution> {
    check_obs(y)?;
    if start.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: y.len(),
            got: start.len(),
        });
    }
    Newton {
        model,
        y,
        tail: None,
    }
    .run(start, config)
}

/// `argmin_x h_n(x) + α(x_n, u)`: the MAP path with its tail anchored at `u`.
pub fn solve_constrained<M: ContinuousHmm + ?Sized>(
    model: &M,
    y: &[f64],
    u: f64,
    config: &SolverConfig,
) -> Result<MapSolution> {
    check_obs(y)?;
    solve_constrained_from(model, y, u, initial_path(model, y), config)
}

pub fn solve_constrained_from<M: ContinuousHmm + ?Sized>(
    model: &M,
    y: &[f64],
    u: f64,
    start: Vec<f64>,
    config: &SolverConfig,
) -> Result<MapSolution> {
    check_obs(y)?;
    if !u.is_finite() {
        return Err(Error::OutOfDomain {
            value: u,
            domain: "finite reals",
        });
    }
    if start.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: y.len(),
            got: start.len(),
        });
    }
    Newton {
        model,
        y,
        tail: Some(u),
    }
    .run(start, config)
}

/// Derivative of the tail-anchored optimum with respect to its anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceJacobian {
    /// Central difference `(X̃(u + h) - X̃(u - h)) / 2h`, one entry per coordinate.
    pub values: Vec<f64>,
    /// The tail-anchored optimum at `u` itself.
    pub center: MapSolution,
    /// Largest relative change when the step is halved.
    pub richardson_change: f64,
}

impl InfluenceJacobian {
    /// Halving the step moved the Jacobian by less than `1e-3` relative.
    pub fn richardson_ok(&self) -> bool {
        self.richardson_change < 1e-3
    }
}

/// `∂/∂u X̃ⁿ(u)` by central finite differences with step `config.fd_step`.
pub fn influence_jacobian<M: ContinuousHmm + ?Sized>(
    model: &M,
    y: &[f64],
    u: f64,
    config: &SolverConfig,
) -> Result<InfluenceJacobian> {
    let center = solve_constrained(model, y, u, config)?;
    if !center.converged {
        return Err(Error::NotConverged(
            "tail-anchored solve at the center point",
        ));
    }
    let diff = |h: f64| -> Result<Vec<f64>> {
        let plus = solve_constrained_from(model, y, u + h, center.path.clone(), config)?;
        let minus = solve_constrained_from(model, y, u - h, center.path.clone(), config)?;
        if !(plus.converged && minus.converged) {
            return Err(Error::NotConverged(
                "tail-anchored solve at a shifted anchor",
            ));
        }
        Ok(plus
            .path
            .iter()
            .zip(&minus.path)
            .map(|(p, m)| (p - m) / (2.0 * h))
            .collect())
    };
    let h = config.fd_step;
    let values = diff(h)?;
    let half = diff(0.5 * h)?;
    let scale = inf_norm(&values).max(f64::MIN_POSITIVE);
    let richardson_change = values
        .iter()
        .zip(&half)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / scale;
    let richardson_change = if inf_norm(&values) == 0.0 && inf_norm(&half) == 0.0 {
        0.0
    } else {
        richardson_change
    };
    Ok(InfluenceJacobian {
        values,
        center,
        richardson_change,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrefixRow {
    /// Horizon (number of observations used).
    pub n: usize,
    /// `X̂ⁿ_{1:m}`.
    pub prefix: Vec<f64>,
    pub objective: f64,
    pub grad_inf_norm: f64,
    pub iterations: usize,
    /// `X̂ⁿ_{1:m} - X̂ⁿ⁻¹_{1:m}` solved for directly, so it keeps its relative
    /// accuracy far below the rounding level of `prefix`. `None` when
    /// horizon `n - 1` has no row.
    pub increment: Option<Vec<f64>>,
}

/// First `m` coordinates of the MAP path for each horizon `n = m..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixSeries {
    pub m: usize,
    pub max_horizon: usize,
    /// One row per horizon whose solve converged, in increasing `n`.
    pub rows: Vec<PrefixRow>,
    /// Horizons whose solve did not converge.
    pub skipped: Vec<usize>,
}

impl PrefixSeries {
    pub fn row(&self, n: usize) -> Option<&PrefixRow> {
        self.rows
            .binary_search_by_key(&n, |r| r.n)
            .ok()
            .map(|i| &self.rows[i])
    }
}

/// Solves the MAP problem on `y_{1:n}` for every `n = m..=y.len()`, each
/// warm-started from the previous optimum extended by `argmin_x γ(x, y_n)`.
pub fn prefix_series<M: ContinuousHmm + ?Sized>(
    model: &M,
    y: &[f64],
    m: usize,
    config: &SolverConfig,
) -> Result<PrefixSeries> {
    check_obs(y)?;
    if m < 1 || m > y.len() {
        return Err(Error::invalid("m", "prefix length must lie in 1..=N"));
    }
    let mut rows: Vec<PrefixRow> = Vec::new();
    let mut skipped = Vec::new();
    let mut start = initial_path(model, &y[..m]);
    for n in m..=y.len() {
        if n > m {
            start.push(model.obs_argmin(y[n - 1]));
        }
        let sol = match solve_map_from(model, &y[..n], start.clone(), config) {
            Ok(sol) => sol,
            Err(Error::NotConvex { .. }) | Err(Error::NotConverged(_)) => {
                skipped.push(n);
                continue;
            }
            Err(e) => return Err(e),
        };
        if sol.converged {
            let increment = match rows.last() {
                Some(r) if r.n + 1 == n => {
                    resolve_increment(model, &y[..n], &start[..n - 1], &sol.path).map(|mut d| {
                        d.truncate(m);
                        d
                    })
                }
                _ => None,
            };
            rows.push(PrefixRow {
                n,
                prefix: sol.path[..m].to_vec(),
                objective: sol.objective,
                grad_inf_norm: sol.grad_inf_norm,
                iterations: sol.iterations,
                increment,
            });
            start = sol.path;
        } else {
            skipped.push(n);
        }
    }
    Ok(PrefixSeries {
        m,
        max_horizon: y.len(),
        rows,
        skipped,
    })
}

/// `φ'(t + d) - φ'(t)`, accurate relative to `d` even when `t + d` rounds
/// to `t`.
fn scalar_change(c: impl Fn(f64) -> Cost1, t: f64, d: f64) -> f64 {
    let (c0, c1) = (c(t), c(t + d));
    if libm::fabs(d) > SMALL_SHIFT * (1.0 + libm::fabs(t)) {
        c1.d1 - c0.d1
    } else {
        0.5 * (c0.d2 + c1.d2) * d
    }
}

/// `∇α(u + du, v + dv) - ∇α(u, v)`, as [`scalar_change`].
fn pair_change(c: impl Fn(f64, f64) -> Cost2, u: f64, v: f64, du: f64, dv: f64) -> (f64, f64) {
    let (c0, c1) = (c(u, v), c(u + du, v + dv));
    let big = libm::fabs(du) > SMALL_SHIFT * (1.0 + libm::fabs(u))
        || libm::fabs(dv) > SMALL_SHIFT * (1.0 + libm::fabs(v));
    if big {
        (c1.du - c0.du, c1.dv - c0.dv)
    } else {
        (
            0.5 * ((c0.duu + c1.duu) * du + (c0.duv + c1.duv) * dv),
            0.5 * ((c0.duv + c1.duv) * du + (c0.dvv + c1.dvv) * dv),
        )
    }
}

/// `∇h_n(x + dx) - ∇h_n(x)` term by term.
fn grad_change<M: ContinuousHmm + ?Sized>(model: &M, x: &[f64], dx: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut out = alloc::vec![0.0; n];
    out[0] += scalar_change(|t| model.init_cost(t), x[0], dx[0]);
    for k in 0..n {
        out[k] += scalar_change(|t| model.obs_cost(t, y[k]), x[k], dx[k]);
        if k > 0 {
            let (gu, gv) = pair_change(
                |u, v| model.trans_cost(u, v),
                x[k - 1],
                x[k],
                dx[k - 1],
                dx[k],
            );
            out[k - 1] += gu;
            out[k] += gv;
        }
    }
    out
}

/// `X̂ⁿ - X̂ⁿ⁻¹` on coordinates `1..n` (the last entry is `X̂ⁿ_n` minus
/// itself, i.e. zero at the start), given both optima.
///
/// Newton on the increment `δ` for `∇h_n(p + δ) = 0` with `p = (prev, new_n)`,
/// where the gradient is assembled as the change from `p` plus the terms
/// `h_{n-1}` lacks. The residual of `prev` on `h_{n-1}` is dropped: it is
/// rounding noise, and keeping it would pin every coordinate of `δ` at that
/// level. Returns `None` if a step fails.
fn resolve_increment<M: ContinuousHmm + ?Sized>(
    model: &M,
    y: &[f64],
    prev: &[f64],
    new: &[f64],
) -> Option<Vec<f64>> {
    let n = new.len();
    let mut base = prev.to_vec();
    base.push(new[n - 1]);
    let (g_new, _) = h_grad_hess(model, &base, y, None);
    let (g_old, _) = h_grad_hess(model, prev, &y[..n - 1], None);
    let fresh: Vec<f64> = (0..n)
        .map(|k| g_new[k] - g_old.get(k).copied().unwrap_or(0.0))
        .collect();
    let mut delta: Vec<f64> = (0..n).map(|k| new[k] - base[k]).collect();
    for _ in 0..INCREMENT_STEPS {
        let change = grad_change(model, &base, &delta, y);
        let rhs: Vec<f64> = fresh.iter().zip(&change).map(|(a, b)| -(a + b)).collect();
        let point: Vec<f64> = base.iter().zip(&delta).map(|(a, b)| a + b).collect();
        let (_, hess) = h_grad_hess(model, &point, y, None);
        let step = hess.solve(&rhs).ok()?;
        for (d, s) in delta.iter_mut().zip(&step) {
            *d += s;
        }
    }
    delta.iter().all(|d| d.is_finite()).then_some(delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ExpPower, LinearGaussian};
    use alloc::vec;

    #[test]
    fn single_observation_gaussian() {
        let m = LinearGaussian::standard();
        let s = solve_map(&m, &[2.0], &SolverConfig::default()).unwrap();
        assert!(s.converged);
        assert!((s.path[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_observations_give_zero_path() {
        let m = LinearGaussian::standard();
        let s = solve_map(&m, &[0.0, 0.0], &SolverConfig::default()).unwrap();
        assert_eq!(s.path, vec![0.0, 0.0]);
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn constrained_single_step() {
        let m = LinearGaussian::standard();
        for &(y0, u) in &[(0.0, 3.0), (1.5, -2.0), (-4.0, 0.7)] {
            let s = solve_constrained(&m, &[y0], u, &SolverConfig::default()).unwrap();
            assert!((s.path[0] - (y0 + u) / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn jacobian_single_step_is_one_third() {
        let m = LinearGaussian::standard();
        for &u in &[-3.0, 0.0, 5.0] {
            let j = influence_jacobian(&m, &[0.4], u, &SolverConfig::default()).unwrap();
            assert!((j.values[0] - 1.0 / 3.0).abs() < 1e-8);
            assert!(j.richardson_ok());
        }
    }

    #[test]
    fn separable_transition_has_zero_influence_and_no_tail_effect() {
        // a = 0: α(u, v) = v²/2 does not depend on u
        let m = LinearGaussian::new(0.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let y = [0.3, -1.2, 2.2, 0.1];
        let cfg = SolverConfig::default();
        let j = influence_jacobian(&m, &y, 1.7, &cfg).unwrap();
        assert!(j.values.iter().all(|v| *v == 0.0));
        let free = solve_map(&m, &y, &cfg).unwrap();
        let tied = solve_constrained(&m, &y, 1.7, &cfg).unwrap();
        for (a, b) in free.path.iter().zip(&tied.path) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let m = LinearGaussian::standard();
        let cfg = SolverConfig {
            line_search_shrink: 1.0,
            ..SolverConfig::default()
        };
        assert!(solve_map(&m, &[1.0], &cfg).is_err());
        assert!(solve_map(&m, &[], &SolverConfig::default()).is_err());
        assert!(solve_map(&m, &[f64::NAN], &SolverConfig::default()).is_err());
    }

    #[test]
    fn max_iters_flags_non_convergence() {
        let m = ExpPower::new(0.9, 1.0, 0.5, 0.5, 0.5).unwrap();
        let y = [3.0, -2.0, 4.0, 1.0, -5.0];
        let cfg = SolverConfig {
            max_iters: 1,
            ..SolverConfig::default()
        };
        let s = solve_map(&m, &y, &cfg).unwrap();
        assert!(!s.converged);
        assert_eq!(s.iterations, 1);
    }

    #[test]
    fn prefix_series_single_row_matches_direct_solve() {
        let m = LinearGaussian::stationary(0.9, 1.0).unwrap();
        let y = [0.5, -0.2, 1.1];
        let cfg = SolverConfig::default();
        let ps = prefix_series(&m, &y, 3, &cfg).unwrap();
        assert_eq!(ps.rows.len(), 1);
        let direct = solve_map(&m, &y, &cfg).unwrap();
        for (a, b) in ps.rows[0].prefix.iter().zip(&direct.path) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(prefix_series(&m, &y, 4, &cfg).is_err());
        assert!(prefix_series(&m, &y, 0, &cfg).is_err());
    }
}
