//! Model abstractions, the bundled example models, the path objective
//! `h_n = -log L_n` and trajectory simulation.

mod discrete;
mod examples;
mod validate;

use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;

use crate::rng::{stream, stream_rng};
use crate::tridiag::SymTridiagonal;
use crate::{Error, Result};

pub use discrete::{DiscreteHmm, EmissionDensity, GaussianEmission};
pub use examples::{solve_end, solve_mid, ExpPower, LaplaceGaussian, LinearGaussian};
pub use validate::{validate_assumptions, AssumptionReport, Axis, CheckResult, GridSpec};

/// Value, first and second derivative of a scalar cost.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Cost1 {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

/// Value, gradient and Hessian of a two-argument cost `(u, v) ↦ α(u, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Cost2 {
    pub value: f64,
    pub du: f64,
    pub dv: f64,
    pub duu: f64,
    pub duv: f64,
    pub dvv: f64,
}

/// Continuous-state hidden Markov model described by its negative
/// log-densities, stored without normalizing constants:
///
/// - `init_cost(u)   = -log μ(u)`
/// - `trans_cost(u, v) = α(u, v)` with `q(u, v) ∝ exp(-α(u, v))`
/// - `obs_cost(x, y) = γ(x, y)` with `p(x, y) ∝ exp(-γ(x, y))`
///
/// Implementations are immutable and must be safe to evaluate concurrently.
pub trait ContinuousHmm: Send + Sync {
    fn init_cost(&self, u: f64) -> Cost1;
    fn trans_cost(&self, u: f64, v: f64) -> Cost2;
    fn obs_cost(&self, x: f64, y: f64) -> Cost1;

    /// Uniform lower bound on `∂²γ/∂x²`.
    fn kappa(&self) -> f64;

    /// Bound on `|∂²α/∂u∂v|` over the sublevel set `{α ≤ level}`.
    fn coupling_bound(&self, level: f64) -> f64;

    /// `argmin_x γ(x, y)`. The default runs a damped 1-D Newton iteration from
    /// `x = y` and falls back to `0` if it fails to converge.
    fn obs_argmin(&self, y: f64) -> f64 {
        scalar_newton(|x| self.obs_cost(x, y), y).unwrap_or(0.0)
    }

    fn sample_init(&self, rng: &mut dyn RngCore) -> f64;
    fn sample_transition(&self, u: f64, rng: &mut dyn RngCore) -> f64;
    fn sample_observation(&self, x: f64, rng: &mut dyn RngCore) -> f64;
}

fn scalar_newton(f: impl Fn(f64) -> Cost1, start: f64) -> Option<f64> {
    let mut x = start;
    let mut c = f(x);
    for _ in 0..100 {
        if c.d1.abs() <= 1e-14 * (1.0 + x.abs()) {
            return Some(x);
        }
        if !(c.d2 > 0.0) {
            return None;
        }
        let step = -c.d1 / c.d2;
        let mut t = 1.0;
        loop {
            let trial = f(x + t * step);
            if trial.value <= c.value || t < 1e-12 {
                x += t * step;
                c = trial;
                break;
            }
            t *= 0.5;
        }
        if (t * step).abs() <= 1e-15 * (1.0 + x.abs()) {
            return Some(x);
        }
    }
    None
}

fn check_lengths(x: &[f64], y: &[f64]) -> Result<()> {
    if y.is_empty() {
        return Err(Error::Empty("observations"));
    }
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: y.len(),
            got: x.len(),
        });
    }
    Ok(())
}

/// `h_n(x) = -log μ(x₁) + γ(x₁, y₁) + Σ_{m≥2} [α(x_{m-1}, x_m) + γ(x_m, y_m)]`.
pub fn eval_h<M: ContinuousHmm + ?Sized>(model: &M, x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x, y)?;
    Ok(h_value(model, x, y, None))
}

/// Gradient and tridiagonal Hessian of `h_n` at `x`.
pub fn eval_h_grad_hess<M: ContinuousHmm + ?Sized>(
    model: &M,
    x: &[f64],
    y: &[f64],
) -> Result<(Vec<f64>, SymTridiagonal)> {
    check_lengths(x, y)?;
    Ok(h_grad_hess(model, x, y, None))
}

/// `h_n(x)`, plus `α(x_n, u)` when a tail anchor `u` is given.
pub(crate) fn h_value<M: ContinuousHmm + ?Sized>(
    model: &M,
    x: &[f64],
    y: &[f64],
    tail: Option<f64>,
) -> f64 {
    let mut total = model.init_cost(x[0]).value + model.obs_cost(x[0], y[0]).value;
    for m in 1..x.len() {
        total += model.trans_cost(x[m - 1], x[m]).value + model.obs_cost(x[m], y[m]).value;
    }
    if let Some(u) = tail {
        total += model.trans_cost(x[x.len() - 1], u).value;
    }
    total
}

pub(crate) fn h_grad_hess<M: ContinuousHmm + ?Sized>(
    model: &M,
    x: &[f64],
    y: &[f64],
    tail: Option<f64>,
) -> (Vec<f64>, SymTridiagonal) {
    let n = x.len();
    let mut grad = vec![0.0; n];
    let mut hess = SymTridiagonal::zeros(n);

    let init = model.init_cost(x[0]);
    grad[0] += init.d1;
    hess.diag[0] += init.d2;
    for m in 0..n {
        let obs = model.obs_cost(x[m], y[m]);
        grad[m] += obs.d1;
        hess.diag[m] += obs.d2;
        if m > 0 {
            let t = model.trans_cost(x[m - 1], x[m]);
            grad[m - 1] += t.du;
            grad[m] += t.dv;
            hess.diag[m - 1] += t.duu;
            hess.diag[m] += t.dvv;
            hess.off[m - 1] += t.duv;
        }
    }
    if let Some(u) = tail {
        let t = model.trans_cost(x[n - 1], u);
        grad[n - 1] += t.du;
        hess.diag[n - 1] += t.duu;
    }
    (grad, hess)
}

/// A simulated hidden path together with its observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S = f64> {
    pub states: Vec<S>,
    pub observations: Vec<f64>,
    pub seed: u64,
}

impl<S> Trajectory<S> {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// Draws `(X_{1:n}, Y_{1:n})` from the model's exact sampler.
pub fn sample_trajectory<M: ContinuousHmm + ?Sized>(
    model: &M,
    n: usize,
    seed: u64,
) -> Result<Trajectory> {
    if n < 1 {
        return Err(Error::invalid("n", "trajectory length must be at least 1"));
    }
    let mut rng = stream_rng(seed, stream::TRAJECTORY);
    let mut states = Vec::with_capacity(n);
    let mut observations = Vec::with_capacity(n);
    let mut x = model.sample_init(&mut rng);
    for m in 0..n {
        if m > 0 {
            x = model.sample_transition(x, &mut rng);
        }
        states.push(x);
        observations.push(model.sample_observation(x, &mut rng));
    }
    Ok(Trajectory {
        states,
        observations,
        seed,
    })
}

/// Empirical surrogate for the growth constant `C` bounding
/// `-n⁻¹ log L_n(X, Y)` along true trajectories: the maximum over seeds of
/// `h_n(X_{1:n}, Y_{1:n}) / n`.
pub fn estimate_growth_constant<M: ContinuousHmm + ?Sized>(
    model: &M,
    n: usize,
    seeds: &[u64],
) -> Result<f64> {
    if n < 100 {
        return Err(Error::invalid("n", "horizon must be at least 100"));
    }
    if seeds.len() < 10 {
        return Err(Error::invalid("seeds", "at least 10 seeds are required"));
    }
    let mut worst = f64::NEG_INFINITY;
    for &seed in seeds {
        let traj = sample_trajectory(model, n, seed)?;
        let h = h_value(model, &traj.states, &traj.observations, None);
        worst = worst.max(h / n as f64);
    }
    Ok(worst)
}

/// Constants `M > 4C` and `ρ = 2C / M` parameterizing the counting argument
/// behind prefix convergence. Reported only; no algorithm depends on them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProofConstants {
    pub growth: f64,
    pub level: f64,
    pub rho: f64,
}

impl ProofConstants {
    /// `level = factor · growth`; `factor` must exceed 4.
    pub fn from_growth(growth: f64, factor: f64) -> Result<Self> {
        if !(factor > 4.0) {
            return Err(Error::invalid("factor", "must exceed 4"));
        }
        let level = factor * growth;
        Ok(ProofConstants {
            growth,
            level,
            rho: 2.0 * growth / level,
        })
    }
}
