//! Freezing of the Laplace-model MAP path.
//!
//! On `A_m = {y_{m-1} + 1 ≤ y_m ≤ y_{m+1} - 1}` the optimal path passes
//! through `y_m` at time `m` for every horizon beyond `m`, and everything
//! before `m` is frozen from horizon `m + 1` on.

use alloc::vec;
use alloc::vec::Vec;

use crate::map::LaplaceMapDp;

/// Whether `A_m` holds at 0-based index `k` (`1 ≤ k ≤ N-2`).
pub fn laplace_event(y: &[f64], k: usize) -> bool {
    k >= 1 && k + 1 < y.len() && y[k - 1] + 1.0 <= y[k] && y[k] <= y[k + 1] - 1.0
}

/// All 0-based indices where `A_m` holds.
pub fn laplace_events(y: &[f64]) -> Vec<usize> {
    (1..y.len().saturating_sub(1))
        .filter(|&k| laplace_event(y, k))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventCheck {
    /// 0-based index of the event.
    pub index: usize,
    /// `max_n |X̂ⁿ_m - y_m|` over horizons `n > m`.
    pub value_deviation: f64,
    /// `max_{n > m, j ≤ m} |X̂ⁿ_j - X̂^{m+1}_j|`.
    pub prefix_deviation: f64,
    pub value_ok: bool,
    pub prefix_ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilizationReport {
    pub horizon: usize,
    pub tol: f64,
    pub events: Vec<EventCheck>,
}

impl StabilizationReport {
    pub fn violations(&self) -> usize {
        self.events
            .iter()
            .filter(|e| !(e.value_ok && e.prefix_ok))
            .count()
    }

    pub fn all_pass(&self) -> bool {
        self.violations() == 0
    }
}

/// Checks every event against the MAP paths of all horizons.
///
/// Horizons are visited from `N` down while keeping per-coordinate running
/// extremes over the horizons seen so far, so the whole report costs `O(N²)`.
pub fn laplace_stabilization_report(dp: &LaplaceMapDp, tol: f64) -> StabilizationReport {
    let y = dp.observations();
    let big = y.len();
    let events = laplace_events(y);
    let mut run_max = vec![f64::NEG_INFINITY; big];
    let mut run_min = vec![f64::INFINITY; big];
    let mut buf = vec![0.0; big];
    let mut checks = Vec::with_capacity(events.len());
    let mut pending = events.iter().rev().peekable();
    for n in (1..=big).rev() {
        if pending.peek().is_none() {
            break;
        }
        dp.path_into(n, &mut buf)
            .expect("horizon lies within the solved range");
        for j in 0..n {
            run_max[j] = run_max[j].max(buf[j]);
            run_min[j] = run_min[j].min(buf[j]);
        }
        // the event at index k is checked once horizon k + 2 is included
        while let Some(&&k) = pending.peek() {
            if k + 2 != n {
                break;
            }
            pending.next();
            let value_deviation = (run_max[k] - y[k]).abs().max((run_min[k] - y[k]).abs());
            let prefix_deviation = (0..=k)
                .map(|j| (run_max[j] - buf[j]).max(buf[j] - run_min[j]))
                .fold(0.0, f64::max);
            checks.push(EventCheck {
                index: k,
                value_deviation,
                prefix_deviation,
                value_ok: value_deviation <= tol,
                prefix_ok: prefix_deviation <= tol,
            });
        }
    }
    checks.reverse();
    StabilizationReport {
        horizon: big,
        tol,
        events: checks,
    }
}
