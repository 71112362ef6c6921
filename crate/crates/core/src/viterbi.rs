//! Viterbi decoding for finite-state models, an exhaustive oracle, dominance
//! sets `D_i` and survivor coalescence.
//!
//! States are `0..d` and time indices are 0-based throughout.
//!
//! Ties: a predecessor replaces the current best only if strictly better, and
//! the final state is the smallest maximizer, so ties resolve towards smaller
//! state indices step by step. The brute-force oracle enumerates paths in
//! lexicographic order and keeps the first maximizer. The two rules agree
//! whenever ties are confined to single steps; with continuous emission
//! densities exact ties have probability zero.

use alloc::vec;
use alloc::vec::Vec;

use crate::model::{DiscreteHmm, EmissionDensity};
use crate::{Error, Result};

/// Largest `dⁿ` accepted by [`brute_force_map`].
pub const BRUTE_FORCE_LIMIT: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ViterbiResult {
    pub path: Vec<usize>,
    /// `log L_n(path; y)`.
    pub log_score: f64,
    /// Row-major `n × d`: `backpointers[m * d + j]` is the best predecessor of
    /// state `j` at time `m`. Row 0 is unused and zero.
    pub backpointers: Vec<usize>,
    /// Length of the prefix shared by all survivor paths; see
    /// [`coalesced_prefix`].
    pub stabilized_prefix: usize,
}

struct Trellis {
    d: usize,
    n: usize,
    delta: Vec<f64>,
    back: Vec<usize>,
}

fn check_columns<E: EmissionDensity>(model: &DiscreteHmm<E>, y: &[f64]) -> Result<()> {
    if y.is_empty() {
        return Err(Error::Empty("observations"));
    }
    let d = model.num_states();
    for (m, &ym) in y.iter().enumerate() {
        if (0..d).all(|i| model.log_emit(i, ym) == f64::NEG_INFINITY) {
            return Err(Error::DegenerateObservation { index: m });
        }
    }
    Ok(())
}

fn trellis<E: EmissionDensity>(model: &DiscreteHmm<E>, y: &[f64]) -> Result<Trellis> {
    check_columns(model, y)?;
    let d = model.num_states();
    let n = y.len();
    let mut back = vec![0usize; n * d];
    let mut prev: Vec<f64> = (0..d)
        .map(|i| model.log_init(i) + model.log_emit(i, y[0]))
        .collect();
    let mut cur = vec![0.0; d];
    for m in 1..n {
        for j in 0..d {
            let mut best = prev[0] + model.log_trans(0, j);
            let mut arg = 0;
            for (i, &p) in prev.iter().enumerate().skip(1) {
                let s = p + model.log_trans(i, j);
                if s > best {
                    best = s;
                    arg = i;
                }
            }
            cur[j] = best + model.log_emit(j, y[m]);
            back[m * d + j] = arg;
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    Ok(Trellis {
        d,
        n,
        delta: prev,
        back,
    })
}

impl Trellis {
    fn best_final(&self) -> usize {
        let mut arg = 0;
        for j in 1..self.d {
            if self.delta[j] > self.delta[arg] {
                arg = j;
            }
        }
        arg
    }

    fn backtrack(&self, last: usize) -> Vec<usize> {
        let mut path = vec![0; self.n];
        let mut s = last;
        path[self.n - 1] = s;
        for m in (1..self.n).rev() {
            s = self.back[m * self.d + s];
            path[m - 1] = s;
        }
        path
    }

    fn coalesced(&self) -> usize {
        let mut alive: Vec<bool> = self.delta.iter().map(|v| *v > f64::NEG_INFINITY).collect();
        let mut count = alive.iter().filter(|a| **a).count();
        if count == 0 {
            return 0;
        }
        let mut m = self.n - 1;
        loop {
            if count == 1 {
                return m + 1;
            }
            if m == 0 {
                return 0;
            }
            let mut next = vec![false; self.d];
            for (j, _) in alive.iter().enumerate().filter(|(_, a)| **a) {
                next[self.back[m * self.d + j]] = true;
            }
            alive = next;
            count = alive.iter().filter(|a| **a).count();
            m -= 1;
        }
    }
}

/// The MAP path `argmax_x log L_n(x; y)` by dynamic programming in the log
/// domain, `O(n d²)`.
pub fn viterbi<E: EmissionDensity>(model: &DiscreteHmm<E>, y: &[f64]) -> Result<ViterbiResult> {
    let t = trellis(model, y)?;
    let last = t.best_final();
    let log_score = t.delta[last];
    let path = t.backtrack(last);
    let stabilized_prefix = t.coalesced();
    Ok(ViterbiResult {
        path,
        log_score,
        backpointers: t.back,
        stabilized_prefix,
    })
}

/// Length of the prefix shared by every survivor path at time `n`: the
/// largest `m` such that the best paths ending in each reachable final state
/// agree on their first `m` entries. Those entries can no longer change when
/// more observations arrive.
///
/// Returns `n` when only one final state is reachable.
pub fn coalesced_prefix<E: EmissionDensity>(model: &DiscreteHmm<E>, y: &[f64]) -> Result<usize> {
    Ok(trellis(model, y)?.coalesced())
}

/// Exhaustive maximization of `log L_n` over all `dⁿ` paths.
pub fn brute_force_map<E: EmissionDensity>(
    model: &DiscreteHmm<E>,
    y: &[f64],
) -> Result<(Vec<usize>, f64)> {
    check_columns(model, y)?;
    let d = model.num_states();
    let n = y.len();
    let size = (d as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if size > BRUTE_FORCE_LIMIT || n > u32::MAX as usize {
        return Err(Error::TooLarge {
            size,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let mut path = vec![0usize; n];
    let mut best_path = path.clone();
    let mut best = model.path_log_likelihood(&path, y)?;
    loop {
        // odometer increment, last coordinate fastest
        let mut k = n;
        loop {
            if k == 0 {
                return Ok((best_path, best));
            }
            k -= 1;
            path[k] += 1;
            if path[k] < d {
                break;
            }
            path[k] = 0;
        }
        let s = model.path_log_likelihood(&path, y)?;
        if s > best {
            best = s;
            best_path.copy_from_slice(&path);
        }
    }
}

/// Whether `y ∈ D_i`: for all `x₁, x₃` and every `x₂ ≠ i`,
///
/// ```text
/// q(x₁, i) p(i, y) q(i, x₃) > q(x₁, x₂) p(x₂, y) q(x₂, x₃),
/// ```
///
/// compared in the log domain. The inequality is strict, so boundary points
/// and pairs of impossible transitions are not members.
pub fn d_set_member<E: EmissionDensity>(model: &DiscreteHmm<E>, i: usize, y: f64) -> bool {
    let d = model.num_states();
    if i >= d {
        return false;
    }
    let own = model.log_emit(i, y);
    let others: Vec<f64> = (0..d).map(|j| model.log_emit(j, y)).collect();
    for x1 in 0..d {
        for x3 in 0..d {
            let lhs = model.log_trans(x1, i) + own + model.log_trans(i, x3);
            for (x2, &e) in others.iter().enumerate() {
                if x2 == i {
                    continue;
                }
                let rhs = model.log_trans(x1, x2) + e + model.log_trans(x2, x3);
                if !(lhs > rhs) {
                    return false;
                }
            }
        }
    }
    true
}

/// Times `m` with `y_m ∈ D_{i0}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenewalRecord {
    pub i0: usize,
    pub times: Vec<usize>,
}

pub fn renewal_times<E: EmissionDensity>(
    model: &DiscreteHmm<E>,
    y: &[f64],
    i0: usize,
) -> RenewalRecord {
    let times = y
        .iter()
        .enumerate()
        .filter(|(_, &ym)| d_set_member(model, i0, ym))
        .map(|(m, _)| m)
        .collect();
    RenewalRecord { i0, times }
}
