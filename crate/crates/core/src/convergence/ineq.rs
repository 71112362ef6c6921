//! The inequality system
//!
//! ```text
//! Σ_{i≤j} b_i² ≤ b_j b_{j+1} c_j,   j = 1, …, n-1
//! Σ_{i≤n} b_i² ≤ b_n c_n
//! ```
//!
//! for nonnegative `b, c`, a generator of feasible instances, and the decay
//! bounds on `b₁` that the system implies.
//!
//! Slices are 0-based: `b[0]` is `b₁`.

use alloc::vec::Vec;

use rand::Rng;

use crate::rng::{stream, stream_rng, StreamRng};
use crate::{Error, Result};

const SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct IneqSequences {
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IneqCheck {
    pub holds: bool,
    /// 0-based index `j` of the first failing inequality.
    pub first_violation: Option<usize>,
}

/// Checks all `n` inequalities, allowing `1e-12·(1 + lhs)` of rounding slack.
pub fn verify_ineq_system(b: &[f64], c: &[f64]) -> Result<IneqCheck> {
    if b.len() != c.len() {
        return Err(Error::LengthMismatch {
            expected: b.len(),
            got: c.len(),
        });
    }
    if b.is_empty() {
        return Err(Error::Empty("sequences"));
    }
    if b.iter().chain(c).any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::invalid(
            "b, c",
            "entries must be finite and nonnegative",
        ));
    }
    let n = b.len();
    let mut sum = 0.0;
    for j in 0..n {
        sum += b[j] * b[j];
        let rhs = if j + 1 < n {
            b[j] * b[j + 1] * c[j]
        } else {
            b[j] * c[j]
        };
        if sum > rhs + SLACK * (1.0 + sum) {
            return Ok(IneqCheck {
                holds: false,
                first_violation: Some(j),
            });
        }
    }
    Ok(IneqCheck {
        holds: true,
        first_violation: None,
    })
}

/// Largest ratio `r` with `r/(1 - r²) ≤ θ`.
fn ratio_limit(theta: f64) -> f64 {
    (libm::sqrt(1.0 + 4.0 * theta * theta) - 1.0) / (2.0 * theta)
}

/// Smallest `c_j` each inequality admits for a given `b`, with `b_n = 1`
/// factored out of the last one.
fn required_c(b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut out = Vec::with_capacity(n);
    let mut sum = 0.0;
    for j in 0..n {
        sum += b[j] * b[j];
        let denom = if j + 1 < n { b[j] * b[j + 1] } else { b[j] };
        out.push(if sum == 0.0 { 0.0 } else { sum / denom });
    }
    out
}

const MAX_REJECTIONS: usize = 10_000;

fn random_profile(rng: &mut StreamRng, n: usize, theta: f64) -> IneqSequences {
    let rmax = ratio_limit(theta);
    if rng.random_range(0..64) == 0 {
        // degenerate all-zero b
        let c = (0..n).map(|_| rng.random::<f64>() * theta).collect();
        return IneqSequences {
            b: alloc::vec![0.0; n],
            c,
        };
    }
    // b_i = b_{i+1}·r_i with every r_i ≤ r_max keeps each c_j below θ
    let base: f64 = rng.random_range(0.05..1.0);
    let jitter: f64 = rng.random_range(0.0..0.5);
    let mut b = alloc::vec![0.0; n];
    b[n - 1] = 1.0;
    for i in (0..n - 1).rev() {
        let r = rmax * base * (1.0 - jitter * rng.random::<f64>());
        b[i] = b[i + 1] * r;
    }
    let mut c = required_c(&b);
    // last inequality scales with b_n: choose b_n so that it fits under θ
    let k_n = c[n - 1];
    let scale = rng.random_range(0.0..1.0) * theta / k_n;
    for v in &mut b {
        *v *= scale;
    }
    c[n - 1] = k_n * scale;
    for cj in &mut c {
        let room = theta - *cj;
        if room > 0.0 {
            *cj += rng.random::<f64>() * room;
        }
    }
    IneqSequences { b, c }
}

/// Random feasible `(b, c)` with every `c_i ≤ θ`: geometric profiles
/// `b_i = b_{i+1}·r_i` with jittered ratios below the feasibility limit,
/// `c` drawn between the smallest admissible value and `θ`, and the result
/// re-verified (rejection loop).
pub fn gen_feasible(seed: u64, n: usize, theta: f64) -> Result<IneqSequences> {
    if !(theta >= 1.0) || !theta.is_finite() {
        return Err(Error::invalid("theta", "must be at least 1"));
    }
    if n < 2 {
        return Err(Error::invalid("n", "must be at least 2"));
    }
    let mut rng = stream_rng(seed, stream::INEQUALITY);
    for _ in 0..MAX_REJECTIONS {
        let s = random_profile(&mut rng, n, theta);
        if s.c.iter().all(|&c| c <= theta) && verify_ineq_system(&s.b, &s.c)?.holds {
            return Ok(s);
        }
    }
    Err(Error::Generation {
        attempts: MAX_REJECTIONS,
    })
}

/// Extremal instance: constant ratio `r = frac·r_max(θ)`, every inequality
/// tight, and `c_n = θ`. As `frac → 1` this is the slowest decay of `b₁`
/// the system allows with `c_i ≤ θ`.
pub fn gen_tight(n: usize, theta: f64, frac: f64) -> Result<IneqSequences> {
    if !(theta > 0.0) {
        return Err(Error::invalid("theta", "must be positive"));
    }
    if n < 1 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(Error::invalid("frac", "must lie in (0, 1]"));
    }
    let r = frac * ratio_limit(theta);
    let mut b = alloc::vec![0.0; n];
    b[n - 1] = 1.0;
    for i in (0..n - 1).rev() {
        b[i] = b[i + 1] * r;
    }
    let mut c = required_c(&b);
    let scale = theta / c[n - 1];
    for v in &mut b {
        *v *= scale;
    }
    c[n - 1] = theta;
    Ok(IneqSequences { b, c })
}

/// The three decay bounds on `b₁` and whether `n` lies in each one's domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaA1Bounds {
    /// `√(θe)·exp(-n / (2e(θ² ∨ θ)))`, valid when all `c_i ≤ θ`.
    pub b1s: f64,
    pub b1s_applies: bool,
    /// `√g(ℓ)·n^{-pℓ/(4θ)}`, under the counting condition and `c_n ≤ θ'`.
    pub b1: f64,
    pub b1_threshold: f64,
    pub b1_applies: bool,
    /// `g(2θn)·√g(ℓ)·n^{-pℓ/(4θ)}`, under the counting condition alone.
    pub b1cor: f64,
    pub b1cor_threshold: f64,
    pub b1cor_applies: bool,
}

/// `√(θe)·exp(-n / (2e(θ² ∨ θ)))`.
pub fn bound_b1s(theta: f64, n: usize) -> f64 {
    let e = core::f64::consts::E;
    libm::sqrt(theta * e) * libm::exp(-(n as f64) / (2.0 * e * (theta * theta).max(theta)))
}

pub fn lemma_a1_bounds(
    theta: f64,
    theta_prime: f64,
    p: f64,
    ell: f64,
    g: &dyn Fn(f64) -> f64,
    n: usize,
) -> Result<LemmaA1Bounds> {
    if !(theta > 0.0) {
        return Err(Error::invalid("theta", "must be positive"));
    }
    if !(theta_prime > 0.0) {
        return Err(Error::invalid("theta_prime", "must be positive"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid("p", "must lie in (0, 1)"));
    }
    if !(ell > theta) {
        return Err(Error::invalid("ell", "must exceed theta"));
    }
    let nf = n as f64;
    let g_ell = g(ell);
    if !(g_ell >= 0.0) {
        return Err(Error::invalid("g", "must be nonnegative"));
    }
    let radical = libm::sqrt(g_ell) * libm::pow(nf, -p * ell / (4.0 * theta));
    let b1_threshold = libm::pow(
        ell * (theta_prime * theta_prime).max(g_ell) / theta,
        1.0 / (1.0 - p),
    );
    let b1cor_threshold = libm::pow(ell * g_ell.max(1.0) / theta, 1.0 / (1.0 - p));
    Ok(LemmaA1Bounds {
        b1s: bound_b1s(theta, n),
        b1s_applies: nf >= theta * theta * core::f64::consts::E,
        b1: radical,
        b1_threshold,
        b1_applies: nf > b1_threshold,
        b1cor: g(2.0 * theta * nf) * radical,
        b1cor_threshold,
        b1cor_applies: nf > b1cor_threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LemmaA1Check {
    /// Preconditions hold; `holds` says whether `b₁ ≤ bound`.
    Checked { b1: f64, bound: f64, holds: bool },
    /// A precondition failed, so the bound makes no claim.
    NotApplicable(&'static str),
}

impl LemmaA1Check {
    /// True unless the bound applied and was violated.
    pub fn ok(&self) -> bool {
        !matches!(self, LemmaA1Check::Checked { holds: false, .. })
    }
}

/// `b₁ ≤ √(θe)·exp(-n / (2e(θ² ∨ θ)))` for a feasible system with
/// `max c_i ≤ θ` and `n ≥ θ²e`.
pub fn check_lemma_a1(seq: &IneqSequences, theta: f64) -> Result<LemmaA1Check> {
    if !(theta > 0.0) {
        return Err(Error::invalid("theta", "must be positive"));
    }
    if !verify_ineq_system(&seq.b, &seq.c)?.holds {
        return Ok(LemmaA1Check::NotApplicable("inequality system violated"));
    }
    if seq.c.iter().any(|&c| c > theta) {
        return Ok(LemmaA1Check::NotApplicable("some c_i exceeds theta"));
    }
    let n = seq.b.len();
    if (n as f64) < theta * theta * core::f64::consts::E {
        return Ok(LemmaA1Check::NotApplicable("n below theta^2 e"));
    }
    let bound = bound_b1s(theta, n);
    let b1 = seq.b[0];
    Ok(LemmaA1Check::Checked {
        b1,
        bound,
        holds: b1 <= bound,
    })
}
