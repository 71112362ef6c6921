use alloc::vec::Vec;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

use super::Trajectory;
use crate::rng::{stream, stream_rng};
use crate::{Error, Result};

/// Observation density `p(state, y)` of a finite-state model.
pub trait EmissionDensity: Send + Sync {
    fn density(&self, state: usize, y: f64) -> f64;

    fn log_density(&self, state: usize, y: f64) -> f64 {
        libm::log(self.density(state, y))
    }

    fn sample(&self, state: usize, rng: &mut dyn RngCore) -> f64;
}

/// Gaussian emissions with per-state mean and standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianEmission {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl GaussianEmission {
    pub fn new(means: Vec<f64>, sds: Vec<f64>) -> Result<Self> {
        if means.len() != sds.len() {
            return Err(Error::LengthMismatch {
                expected: means.len(),
                got: sds.len(),
            });
        }
        if sds.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid(
                "sds",
                "standard deviations must be positive",
            ));
        }
        Ok(GaussianEmission { means, sds })
    }
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

impl EmissionDensity for GaussianEmission {
    fn density(&self, state: usize, y: f64) -> f64 {
        libm::exp(self.log_density(state, y))
    }

    fn log_density(&self, state: usize, y: f64) -> f64 {
        let z = (y - self.means[state]) / self.sds[state];
        -0.5 * z * z - libm::log(self.sds[state]) - LN_SQRT_2PI
    }

    fn sample(&self, state: usize, rng: &mut dyn RngCore) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.means[state] + self.sds[state] * z
    }
}

/// Finite-state hidden Markov model on states `0..d`.
///
/// `trans` is row-major: `trans[i * d + j] = q(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteHmm<E> {
    d: usize,
    init: Vec<f64>,
    trans: Vec<f64>,
    emit: E,
    log_init: Vec<f64>,
    log_trans: Vec<f64>,
}

const STOCHASTIC_TOL: f64 = 1e-12;

fn check_distribution(name: &'static str, row: &[f64]) -> Result<()> {
    if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::invalid(name, "entries must be nonnegative"));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::invalid(name, "entries must sum to 1"));
    }
    Ok(())
}

impl<E: EmissionDensity> DiscreteHmm<E> {
    pub fn new(init: Vec<f64>, trans: Vec<f64>, emit: E) -> Result<Self> {
        let d = init.len();
        if d == 0 {
            return Err(Error::Empty("initial distribution"));
        }
        if trans.len() != d * d {
            return Err(Error::LengthMismatch {
                expected: d * d,
                got: trans.len(),
            });
        }
        check_distribution("init", &init)?;
        for row in trans.chunks(d) {
            check_distribution("trans", row)?;
        }
        let log_init = init.iter().map(|&p| libm::log(p)).collect();
        let log_trans = trans.iter().map(|&p| libm::log(p)).collect();
        Ok(DiscreteHmm {
            d,
            init,
            trans,
            emit,
            log_init,
            log_trans,
        })
    }

    pub fn num_states(&self) -> usize {
        self.d
    }

    pub fn init(&self) -> &[f64] {
        &self.init
    }

    pub fn trans(&self, i: usize, j: usize) -> f64 {
        self.trans[i * self.d + j]
    }

    pub fn emission(&self) -> &E {
        &self.emit
    }

    pub fn log_init(&self, i: usize) -> f64 {
        self.log_init[i]
    }

    pub fn log_trans(&self, i: usize, j: usize) -> f64 {
        self.log_trans[i * self.d + j]
    }

    pub fn log_emit(&self, i: usize, y: f64) -> f64 {
        self.emit.log_density(i, y)
    }

    /// `log L_n(path; y)` summed left to right.
    pub fn path_log_likelihood(&self, path: &[usize], y: &[f64]) -> Result<f64> {
        if path.len() != y.len() {
            return Err(Error::LengthMismatch {
                expected: y.len(),
                got: path.len(),
            });
        }
        if y.is_empty() {
            return Err(Error::Empty("observations"));
        }
        if let Some(&bad) = path.iter().find(|&&s| s >= self.d) {
            return Err(Error::invalid(
                "path",
                alloc::format!("state {bad} out of range"),
            ));
        }
        let mut score = self.log_init(path[0]) + self.log_emit(path[0], y[0]);
        for m in 1..path.len() {
            score = score + self.log_trans(path[m - 1], path[m]) + self.log_emit(path[m], y[m]);
        }
        Ok(score)
    }

    fn draw(weights: impl Iterator<Item = f64>, rng: &mut dyn RngCore) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, w) in weights.enumerate() {
            acc += w;
            if w > 0.0 {
                last = i;
            }
            if u < acc {
                return i;
            }
        }
        last
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Trajectory<usize>> {
        if n < 1 {
            return Err(Error::invalid("n", "trajectory length must be at least 1"));
        }
        let mut rng = stream_rng(seed, stream::DISCRETE);
        let mut states = Vec::with_capacity(n);
        let mut observations = Vec::with_capacity(n);
        let mut s = Self::draw(self.init.iter().copied(), &mut rng);
        for m in 0..n {
            if m > 0 {
                s = Self::draw(
                    self.trans[s * self.d..(s + 1) * self.d].iter().copied(),
                    &mut rng,
                );
            }
            states.push(s);
            observations.push(self.emit.sample(s, &mut rng));
        }
        Ok(Trajectory {
            states,
            observations,
            seed,
        })
    }
}
