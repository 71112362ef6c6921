//! A positive recurrent hidden chain whose MAP path diverges.
//!
//! The hidden state is `(U, V)`: `U` is i.i.d. uniform on `[0, 1)` and `V` is a
//! reflecting random walk on `{1, 2, …}` with stationary law
//! `π(j) ∝ j⁻²(1 + (j/(j+1))²)`. The unit interval is cut into
//! `A_i = [a_{i-1}, a_i)` with `a_i = 1 - 9⁻ⁱ` and length `ℓ_i = 8·9⁻ⁱ`. An
//! observation is uniform on `A_i` when `U ∈ A_i` and `i ≤ V`, and uniform on
//! `[0, 1)` otherwise. The MAP estimate of `V` is the constant path at the
//! largest interval index seen so far, which grows without bound.
//!
//! `V` values and interval indices are the natural 1-based integers here.

use alloc::vec;
use alloc::vec::Vec;

use num_rational::Ratio;
use rand::{Rng, RngCore};

use crate::rng::{stream, stream_rng};
use crate::{Error, Result};

/// `e⁻²/(1 + e⁻²)`: `ε` must stay strictly below this.
pub const EPS_LIMIT: f64 = 0.119_202_922_022_117_57;

/// Largest interval index containing an `f64` below 1.
pub const MAX_FLOAT_INDEX: usize = 17;

/// `1/(π²/3 - 2)`, the normalizing constant of the stationary law.
pub const STATIONARY_C: f64 = 1.0 / (core::f64::consts::PI * core::f64::consts::PI / 3.0 - 2.0);

/// Tail mass left out when drawing `V₁`.
pub const INITIAL_TAIL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceModel {
    pub eps: f64,
    /// Size of the tabulated part of the stationary law used for sampling.
    pub jmax_default: usize,
}

impl Default for DivergenceModel {
    fn default() -> Self {
        DivergenceModel {
            eps: 0.1,
            jmax_default: 4096,
        }
    }
}

fn pow9(i: usize) -> u128 {
    9u128.pow(i as u32)
}

/// `a_i = 1 - 9⁻ⁱ` as an exact fraction; defined for `i ≤ 39`.
pub fn endpoint_exact(i: usize) -> Result<Ratio<i128>> {
    if i > 39 {
        return Err(Error::invalid(
            "i",
            "exact endpoints are available for i ≤ 39",
        ));
    }
    let den = pow9(i) as i128;
    Ok(Ratio::new(den - 1, den))
}

/// `ℓ_i = 8·9⁻ⁱ` as an exact fraction; defined for `1 ≤ i ≤ 39`.
pub fn length_exact(i: usize) -> Result<Ratio<i128>> {
    if i == 0 || i > 39 {
        return Err(Error::invalid(
            "i",
            "exact lengths are available for 1 ≤ i ≤ 39",
        ));
    }
    Ok(Ratio::new(8, pow9(i) as i128))
}

/// `a_i`, correctly rounded for `i ≤ 16`.
pub fn endpoint(i: usize) -> f64 {
    if i <= 16 {
        let den = pow9(i) as f64;
        (den - 1.0) / den
    } else {
        1.0 - libm::pow(9.0, -(i as f64))
    }
}

/// `ℓ_i = 8·9⁻ⁱ`.
pub fn interval_length(i: usize) -> f64 {
    8.0 * libm::pow(9.0, -(i as f64))
}

/// `ln ℓ_i`.
pub fn log_interval_length(i: usize) -> f64 {
    core::f64::consts::LN_2 * 3.0 - (i as f64) * libm::log(9.0)
}

/// The `i ≥ 1` with `a_{i-1} ≤ y < a_i`, decided exactly.
///
/// For `y ≥ 1/2` the difference `t = 1 - y` is exact, and `y < a_i` iff
/// `t·9ⁱ > 1`, which is compared in integer arithmetic.
pub fn interval_index(y: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&y) {
        return Err(Error::OutOfDomain {
            value: y,
            domain: "[0, 1)",
        });
    }
    if y < 0.5 {
        return Ok(1);
    }
    let t = 1.0 - y;
    // t = mant · 2^(-shift), t ≥ 2^-53
    let bits = t.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let mant = (bits & ((1u64 << 52) - 1)) | (1u64 << 52);
    let shift = (1075 - exp) as u32;
    let one = 1u128 << shift;
    let mut i = 1;
    while (mant as u128) * pow9(i) <= one {
        i += 1;
    }
    Ok(i)
}

/// Smallest `f64` in `A_i`, or `None` when `A_i` contains no `f64`.
pub fn interval_floor(i: usize) -> Option<f64> {
    if i == 0 || i > MAX_FLOAT_INDEX {
        return None;
    }
    let mut x = endpoint(i - 1);
    while interval_index(x).ok()? < i {
        x = x.next_up();
    }
    while x > 0.0 && interval_index(x.next_down()).ok()? == i {
        x = x.next_down();
    }
    Some(x)
}

/// Stationary law of `V`, tabulated on `1..=jmax`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryLaw {
    pub jmax: usize,
    /// `probs[j - 1] = π(j)`.
    pub probs: Vec<f64>,
    pub c: f64,
    /// `Σ_{j > jmax} π(j) ≤ c · tail_bound`.
    pub tail_bound: f64,
}

/// `π(j) / C`.
pub fn stationary_weight(j: usize) -> f64 {
    if j <= 1 {
        0.25
    } else {
        let a = j as f64;
        let b = a + 1.0;
        1.0 / (a * a) + 1.0 / (b * b)
    }
}

/// `π(1), …, π(jmax)` with the exact normalizing constant.
pub fn stationary_dist(jmax: usize) -> Result<StationaryLaw> {
    if jmax < 2 {
        return Err(Error::invalid("jmax", "must be at least 2"));
    }
    let probs = (1..=jmax)
        .map(|j| STATIONARY_C * stationary_weight(j))
        .collect();
    Ok(StationaryLaw {
        jmax,
        probs,
        c: STATIONARY_C,
        tail_bound: 2.0 / jmax as f64,
    })
}

/// `Σ_{k > x} 1/k²` for integer `x ≥ 64`, by the asymptotic series of the
/// trigamma function.
fn inverse_square_tail(x: f64) -> f64 {
    let z = x + 1.0;
    let z2 = z * z;
    1.0 / z + 1.0 / (2.0 * z2) + 1.0 / (6.0 * z2 * z) - 1.0 / (30.0 * z2 * z2 * z)
}

/// `P(V > j)` from the tail series; accurate for `j ≥ 64`.
fn survival_tail(j: f64) -> f64 {
    STATIONARY_C * (inverse_square_tail(j) + inverse_square_tail(j + 1.0))
}

impl DivergenceModel {
    pub fn new(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < EPS_LIMIT) {
            return Err(Error::invalid("eps", "must lie in (0, e^-2/(1+e^-2))"));
        }
        Ok(DivergenceModel {
            eps,
            ..DivergenceModel::default()
        })
    }

    /// `P(i, j)` of the reflecting walk.
    pub fn transition(&self, i: usize, j: usize) -> f64 {
        if i == 0 || j == 0 {
            return 0.0;
        }
        if j == i {
            return 1.0 - self.eps;
        }
        if i == 1 {
            return if j == 2 { self.eps } else { 0.0 };
        }
        let r = (i as f64 / (i + 1) as f64) * (i as f64 / (i + 1) as f64);
        if j == i + 1 {
            self.eps * r / (1.0 + r)
        } else if j + 1 == i {
            self.eps / (1.0 + r)
        } else {
            0.0
        }
    }

    pub fn log_transition(&self, i: usize, j: usize) -> f64 {
        libm::log(self.transition(i, j))
    }

    /// `ln π(j)`.
    pub fn log_stationary(&self, j: usize) -> f64 {
        if j == 0 {
            return f64::NEG_INFINITY;
        }
        libm::log(STATIONARY_C * stationary_weight(j))
    }

    /// Observation density `p((u, v), y)` for `u, y ∈ [0, 1)`.
    pub fn emission_density(&self, u: f64, v: usize, y: f64) -> Result<f64> {
        let iu = interval_index(u)?;
        let iy = interval_index(y)?;
        Ok(if iu > v {
            1.0
        } else if iu == iy {
            1.0 / interval_length(iu)
        } else {
            0.0
        })
    }

    /// Draws `(U, V, Y)` paths of length `n`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<DivergencePath> {
        if n < 1 {
            return Err(Error::invalid("n", "trajectory length must be at least 1"));
        }
        let mut rng = stream_rng(seed, stream::DIVERGENCE);
        let sampler = InitialSampler::new(self.jmax_default.max(64));
        let mut u = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        let mut vm = sampler.draw(&mut rng);
        for m in 0..n {
            if m > 0 {
                vm = self.step(vm, &mut rng);
            }
            let um: f64 = rng.random();
            let ym = self.observe(um, vm, &mut rng)?;
            u.push(um);
            v.push(vm);
            y.push(ym);
        }
        Ok(DivergencePath { u, v, y, seed })
    }

    fn step(&self, v: usize, rng: &mut dyn RngCore) -> usize {
        let w: f64 = rng.random();
        let up = self.transition(v, v + 1);
        if w < up {
            v + 1
        } else if w < self.eps && v > 1 {
            v - 1
        } else {
            v
        }
    }

    fn observe(&self, u: f64, v: usize, rng: &mut dyn RngCore) -> Result<f64> {
        let i = interval_index(u)?;
        if i > v {
            return Ok(rng.random());
        }
        let lo = endpoint(i - 1);
        let len = interval_length(i);
        for _ in 0..1000 {
            let w: f64 = rng.random();
            let y = lo + len * w;
            if y < 1.0 && interval_index(y)? == i {
                return Ok(y);
            }
        }
        Err(Error::Generation { attempts: 1000 })
    }
}

/// Inverse-CDF sampler for `π`, tabulated up to `table_len` and using the
/// asymptotic tail beyond it, truncated at tail mass [`INITIAL_TAIL`].
struct InitialSampler {
    /// `survival[j - 1] = P(V > j)`.
    survival: Vec<f64>,
    truncation: f64,
}

impl InitialSampler {
    fn new(table_len: usize) -> Self {
        let mut survival = Vec::with_capacity(table_len);
        // accumulate from the far end so small survivals keep full precision
        let mut s = survival_tail(table_len as f64);
        let mut rev = vec![0.0; table_len];
        for j in (1..=table_len).rev() {
            rev[j - 1] = s;
            s += STATIONARY_C * stationary_weight(j);
        }
        survival.extend_from_slice(&rev);
        // smallest j whose tail is below INITIAL_TAIL
        let mut lo = table_len as f64;
        let mut hi = 2.0 * STATIONARY_C / INITIAL_TAIL * 2.0;
        while hi - lo > 1.0 {
            let mid = libm::floor(0.5 * (lo + hi));
            if survival_tail(mid) < INITIAL_TAIL {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        InitialSampler {
            survival,
            truncation: hi,
        }
    }

    fn draw(&self, rng: &mut dyn RngCore) -> usize {
        loop {
            let u: f64 = rng.random();
            let w = 1.0 - u;
            if w <= survival_tail(self.truncation) {
                continue;
            }
            // smallest j with P(V > j) < w
            let k = self.survival.partition_point(|&s| s >= w);
            if k < self.survival.len() {
                return k + 1;
            }
            let mut lo = self.survival.len() as f64;
            let mut hi = self.truncation;
            while hi - lo > 1.0 {
                let mid = libm::floor(0.5 * (lo + hi));
                if survival_tail(mid) < w {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return hi as usize;
        }
    }
}

/// A simulated path of the divergence model.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergencePath {
    pub u: Vec<f64>,
    pub v: Vec<usize>,
    pub y: Vec<f64>,
    pub seed: u64,
}

/// The explicit MAP estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct MapEstimate {
    /// `û_m`: the smallest `f64` in the interval containing `y_m`.
    pub u_hat: Vec<f64>,
    pub v_hat: Vec<usize>,
    /// Largest interval index among the observations.
    pub jstar: usize,
}

fn check_obs(y: &[f64]) -> Result<Vec<usize>> {
    if y.is_empty() {
        return Err(Error::Empty("observations"));
    }
    y.iter().map(|&v| interval_index(v)).collect()
}

/// `û_m = a_{i(y_m) - 1}`, `v̂ ≡ j*` if `j* > 1` and `v̂ ≡ 2` otherwise.
pub fn closed_form_map(y: &[f64]) -> Result<MapEstimate> {
    let idx = check_obs(y)?;
    let jstar = idx.iter().copied().max().unwrap_or(1);
    let level = if jstar > 1 { jstar } else { 2 };
    let u_hat = idx
        .iter()
        .map(|&i| {
            interval_floor(i).ok_or(Error::OutOfDomain {
                value: i as f64,
                domain: "interval indices with float support",
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MapEstimate {
        u_hat,
        v_hat: vec![level; y.len()],
        jstar,
    })
}

/// Running maximum `j*(n)` of the interval indices.
pub fn track_jstar(y: &[f64]) -> Result<Vec<usize>> {
    let mut best = 0;
    y.iter()
        .map(|&v| {
            best = best.max(interval_index(v)?);
            Ok(best)
        })
        .collect()
}

impl DivergenceModel {
    /// `ln` of the joint density of `V_{1:n} = v` and `Y_{1:n} = y` with `U`
    /// maximized out: the emission factor is `1/ℓ_{i(y_m)}` when
    /// `v_m ≥ i(y_m)` and `1` otherwise.
    pub fn v_log_score(&self, v: &[usize], y: &[f64]) -> Result<f64> {
        let idx = check_obs(y)?;
        if v.len() != y.len() {
            return Err(Error::LengthMismatch {
                expected: y.len(),
                got: v.len(),
            });
        }
        let mut s = self.log_stationary(v[0]) + self.emission_gain(v[0], idx[0]);
        for m in 1..v.len() {
            s = s + self.log_transition(v[m - 1], v[m]) + self.emission_gain(v[m], idx[m]);
        }
        Ok(s)
    }

    fn emission_gain(&self, v: usize, i: usize) -> f64 {
        if v >= i {
            -log_interval_length(i)
        } else {
            0.0
        }
    }

    /// `ln L_n((u, v); y)` with the full observation density.
    pub fn log_likelihood(&self, u: &[f64], v: &[usize], y: &[f64]) -> Result<f64> {
        if u.len() != y.len() || v.len() != y.len() {
            return Err(Error::LengthMismatch {
                expected: y.len(),
                got: if u.len() != y.len() { u.len() } else { v.len() },
            });
        }
        if y.is_empty() {
            return Err(Error::Empty("observations"));
        }
        let mut s = self.log_stationary(v[0]) + libm::log(self.emission_density(u[0], v[0], y[0])?);
        for m in 1..y.len() {
            s = s
                + self.log_transition(v[m - 1], v[m])
                + libm::log(self.emission_density(u[m], v[m], y[m])?);
        }
        Ok(s)
    }

    /// Exhaustive maximization of [`v_log_score`](Self::v_log_score) over
    /// `{1..vmax}ⁿ`, by depth-first search skipping impossible jumps. Ties
    /// keep the lexicographically first path. The search visits at most
    /// `vmax·3ⁿ⁻¹` paths, which must not exceed the brute-force limit.
    pub fn brute_force_v(&self, y: &[f64], vmax: usize) -> Result<(Vec<usize>, f64)> {
        let idx = check_obs(y)?;
        let n = y.len();
        let top = idx.iter().copied().max().unwrap_or(1);
        if vmax < top {
            return Err(Error::invalid(
                "vmax",
                "must cover the largest interval index",
            ));
        }
        // each step moves by at most one
        let size = 3u128
            .checked_pow(n as u32 - 1)
            .and_then(|b| b.checked_mul(vmax as u128))
            .unwrap_or(u128::MAX);
        if size > crate::viterbi::BRUTE_FORCE_LIMIT {
            return Err(Error::TooLarge {
                size,
                limit: crate::viterbi::BRUTE_FORCE_LIMIT,
            });
        }
        let mut best = (Vec::new(), f64::NEG_INFINITY);
        let mut path = Vec::with_capacity(n);
        for v1 in 1..=vmax {
            path.clear();
            path.push(v1);
            let s = self.log_stationary(v1) + self.emission_gain(v1, idx[0]);
            self.dfs(&idx, vmax, &mut path, s, &mut best);
        }
        Ok(best)
    }

    fn dfs(
        &self,
        idx: &[usize],
        vmax: usize,
        path: &mut Vec<usize>,
        score: f64,
        best: &mut (Vec<usize>, f64),
    ) {
        let m = path.len();
        if m == idx.len() {
            if score > best.1 {
                best.0.clone_from(path);
                best.1 = score;
            }
            return;
        }
        let prev = path[m - 1];
        for next in prev.saturating_sub(1).max(1)..=(prev + 1).min(vmax) {
            let t = self.log_transition(prev, next);
            if t == f64::NEG_INFINITY {
                continue;
            }
            path.push(next);
            self.dfs(
                idx,
                vmax,
                path,
                score + t + self.emission_gain(next, idx[m]),
                best,
            );
            path.pop();
        }
    }
}

/// `π(j)/C` as an exact fraction.
pub fn stationary_weight_exact(j: usize) -> Ratio<i128> {
    if j <= 1 {
        Ratio::new(1, 4)
    } else {
        let a = j as i128;
        Ratio::new(1, a * a) + Ratio::new(1, (a + 1) * (a + 1))
    }
}

/// `P(i, j)` as an exact fraction for rational `ε`.
pub fn transition_exact(eps: Ratio<i128>, i: usize, j: usize) -> Ratio<i128> {
    let zero = Ratio::from_integer(0);
    let one = Ratio::from_integer(1);
    if i == 0 || j == 0 {
        return zero;
    }
    if i == j {
        return one - eps;
    }
    if i == 1 {
        return if j == 2 { eps } else { zero };
    }
    let r = Ratio::new(i as i128, i as i128 + 1);
    let r = r * r;
    if j == i + 1 {
        eps * r / (one + r)
    } else if j + 1 == i {
        eps / (one + r)
    } else {
        zero
    }
}

/// First `i < jmax` where `π(i)P(i, i+1) ≠ π(i+1)P(i+1, i)` in exact
/// arithmetic, if any.
pub fn detailed_balance_violation(eps: Ratio<i128>, jmax: usize) -> Option<usize> {
    (1..jmax).find(|&i| {
        stationary_weight_exact(i) * transition_exact(eps, i, i + 1)
            != stationary_weight_exact(i + 1) * transition_exact(eps, i + 1, i)
    })
}
