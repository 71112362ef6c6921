//! Grid-based checks of the log-concavity and coupling assumptions.

use alloc::vec::Vec;

use super::ContinuousHmm;
use crate::{Error, Result};

/// One axis of a rectangular grid: `lo, lo + step, …` up to `hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::invalid(
                "grid",
                "bounds must be finite with lo <= hi",
            ));
        }
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::invalid("grid", "step must be positive"));
        }
        Ok(Axis { lo, hi, step })
    }

    pub fn points(&self) -> Vec<f64> {
        let count = libm::floor((self.hi - self.lo) / self.step + 1e-9) as usize + 1;
        (0..count).map(|i| self.lo + i as f64 * self.step).collect()
    }
}

/// Rectangular grid over `(first argument, second argument)` of the costs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x: Axis,
    pub y: Axis,
}

impl GridSpec {
    pub fn square(lo: f64, hi: f64, step: f64) -> Result<Self> {
        let axis = Axis::new(lo, hi, step)?;
        Ok(GridSpec { x: axis, y: axis })
    }
}

impl Default for GridSpec {
    /// `[-10, 10]²` with step `0.05`.
    fn default() -> Self {
        let axis = Axis {
            lo: -10.0,
            hi: 10.0,
            step: 0.05,
        };
        GridSpec { x: axis, y: axis }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    /// Worst-case margin over the grid; the check passes iff it is `>= 0`.
    pub margin: f64,
    /// Grid point where the margin was attained.
    pub worst_at: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub checks: Vec<CheckResult>,
    /// Grid minima subtracted from `-log μ`, `α` and `γ` before the
    /// nonnegativity checks.
    pub shifts: [f64; 3],
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Tracker {
    name: &'static str,
    margin: f64,
    worst_at: (f64, f64),
}

impl Tracker {
    fn new(name: &'static str) -> Self {
        Tracker {
            name,
            margin: f64::INFINITY,
            worst_at: (f64::NAN, f64::NAN),
        }
    }

    fn observe(&mut self, margin: f64, at: (f64, f64)) {
        if margin < self.margin {
            self.margin = margin;
            self.worst_at = at;
        }
    }

    fn finish(self) -> CheckResult {
        CheckResult {
            name: self.name,
            pass: self.margin >= 0.0,
            margin: self.margin,
            worst_at: self.worst_at,
        }
    }
}

fn rounding_slack(scale: f64) -> f64 {
    64.0 * f64::EPSILON * (1.0 + scale)
}

fn finite_or_err(v: f64, at: (f64, f64)) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Evaluation { x: at.0, y: at.1 })
    }
}

const FD_STEP: f64 = 1e-6;
const SMOOTH_TOL: f64 = 1e-2;

/// Checks the model's costs on every grid point:
///
/// - `a0_nonneg`, `a1_nonneg`, `a2_nonneg`: the shifted costs are nonnegative
///   (the subtracted grid minima are reported in `shifts`),
/// - `a0_convex`: `d²(-log μ)/du² >= 0`,
/// - `a1_psd`: the Hessian of `α` is positive semidefinite,
/// - `a1_smooth`: the analytic Hessian of `α` agrees with central differences
///   of its gradient (fails on kinks),
/// - `a2_convex`: `∂²γ/∂x² >= κ`,
/// - `a4_coupling`: `|∂²α/∂u∂v| <= g(α(u, v))`.
///
/// PSD and coupling margins include a rounding allowance of a few ulps.
pub fn validate_assumptions<M: ContinuousHmm + ?Sized>(
    model: &M,
    grid: &GridSpec,
) -> Result<AssumptionReport> {
    let xs = grid.x.points();
    let ys = grid.y.points();
    let kappa = model.kappa();

    let mut init_min = f64::INFINITY;
    let mut init_convex = Tracker::new("a0_convex");
    for &u in &xs {
        let c = model.init_cost(u);
        init_min = init_min.min(finite_or_err(c.value, (u, 0.0))?);
        init_convex.observe(finite_or_err(c.d2, (u, 0.0))?, (u, 0.0));
    }

    let mut trans_min = f64::INFINITY;
    let mut obs_min = f64::INFINITY;
    let mut psd = Tracker::new("a1_psd");
    let mut smooth = Tracker::new("a1_smooth");
    let mut coupling = Tracker::new("a4_coupling");
    let mut obs_convex = Tracker::new("a2_convex");

    for &u in &xs {
        for &v in &ys {
            let at = (u, v);
            let t = model.trans_cost(u, v);
            for val in [t.value, t.du, t.dv, t.duu, t.duv, t.dvv] {
                finite_or_err(val, at)?;
            }
            trans_min = trans_min.min(t.value);

            let half_trace = 0.5 * (t.duu + t.dvv);
            let half_gap = 0.5 * (t.duu - t.dvv);
            let lambda_min = half_trace - libm::sqrt(half_gap * half_gap + t.duv * t.duv);
            let scale = t.duu.abs() + t.dvv.abs() + t.duv.abs();
            psd.observe(lambda_min + rounding_slack(scale), at);

            let pu = model.trans_cost(u + FD_STEP, v);
            let mu = model.trans_cost(u - FD_STEP, v);
            let pv = model.trans_cost(u, v + FD_STEP);
            let mv = model.trans_cost(u, v - FD_STEP);
            let fd_uu = (pu.du - mu.du) / (2.0 * FD_STEP);
            let fd_uv = (pv.du - mv.du) / (2.0 * FD_STEP);
            let fd_vu = (pu.dv - mu.dv) / (2.0 * FD_STEP);
            let fd_vv = (pv.dv - mv.dv) / (2.0 * FD_STEP);
            let err = (fd_uu - t.duu)
                .abs()
                .max((fd_uv - t.duv).abs())
                .max((fd_vu - t.duv).abs())
                .max((fd_vv - t.dvv).abs());
            let hmax = t.duu.abs().max(t.duv.abs()).max(t.dvv.abs());
            smooth.observe(SMOOTH_TOL * (1.0 + hmax) - err, at);

            let g = model.coupling_bound(t.value);
            coupling.observe(g - t.duv.abs() + rounding_slack(g), at);

            let o = model.obs_cost(u, v);
            obs_min = obs_min.min(finite_or_err(o.value, at)?);
            obs_convex.observe(finite_or_err(o.d2, at)? - kappa, at);
        }
    }

    let nonneg = |name, min: f64| CheckResult {
        name,
        pass: min.is_finite(),
        margin: if min.is_finite() {
            0.0
        } else {
            f64::NEG_INFINITY
        },
        worst_at: (f64::NAN, f64::NAN),
    };

    Ok(AssumptionReport {
        checks: alloc::vec![
            nonneg("a0_nonneg", init_min),
            init_convex.finish(),
            nonneg("a1_nonneg", trans_min),
            psd.finish(),
            smooth.finish(),
            nonneg("a2_nonneg", obs_min),
            obs_convex.finish(),
            coupling.finish(),
        ],
        shifts: [init_min, trans_min, obs_min],
    })
}
