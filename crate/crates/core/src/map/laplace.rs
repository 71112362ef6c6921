//! MAP paths for the Laplace-increment / Gaussian-observation model,
//!
//! ```text
//! minimize  |x₁|/2 + Σ_{m≥2} |x_m - x_{m-1}|/2 + Σ_m (x_m - y_m)²/2.
//! ```
//!
//! The objective is not differentiable, so Newton does not apply. The exact
//! solver runs a forward dynamic program over the derivative of the
//! cost-to-arrive `F_m`, which is piecewise affine and nondecreasing (with
//! jumps). Each step clips `F'_m` to `[-λ, λ]`, records where the clipping
//! starts (`lo_m`) and stops (`hi_m`), and adds the next quadratic. The
//! optimum is then `x_n = root(F'_n)` and `x_m = clamp(x_{m+1}, lo_m, hi_m)`.
//!
//! A single forward pass serves every horizon `n ≤ N`.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use super::{PrefixRow, PrefixSeries};
use crate::model::{solve_end, solve_mid};
use crate::{Error, Result};

const LAMBDA: f64 = 0.5;

/// `|x₁|/2 + Σ|x_m - x_{m-1}|/2 + Σ(x_m - y_m)²/2`.
pub fn laplace_objective(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: y.len(),
            got: x.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::Empty("observations"));
    }
    let mut prev = 0.0;
    let mut total = 0.0;
    for (&xm, &ym) in x.iter().zip(y) {
        total += LAMBDA * (xm - prev).abs() + 0.5 * (xm - ym) * (xm - ym);
        prev = xm;
    }
    Ok(total)
}

/// A breakpoint of `F'`: crossing `at` from left to right changes the
/// affine piece `a·x + b` by `(da, db)`.
#[derive(Debug, Clone, Copy)]
struct Knot {
    at: f64,
    da: f64,
    db: f64,
}

/// Piecewise-affine nondecreasing function, stored as its leftmost and
/// rightmost pieces plus the knots between them.
#[derive(Debug, Clone)]
struct PiecewiseDerivative {
    knots: VecDeque<Knot>,
    left: (f64, f64),
    right: (f64, f64),
}

/// Where `a·x + b` reaches `level`; a flat piece already at the level
/// returns `towards` for the caller to clamp to the piece's end.
fn root_in_piece(a: f64, b: f64, level: f64, towards: f64) -> f64 {
    if a > 0.0 {
        (level - b) / a
    } else {
        towards
    }
}

impl PiecewiseDerivative {
    /// Derivative of `λ|x|`.
    fn absolute_value() -> Self {
        let mut knots = VecDeque::new();
        knots.push_back(Knot {
            at: 0.0,
            da: 0.0,
            db: 2.0 * LAMBDA,
        });
        PiecewiseDerivative {
            knots,
            left: (0.0, -LAMBDA),
            right: (0.0, LAMBDA),
        }
    }

    /// Adds the derivative of `(x - y)²/2`, which shifts every piece by the
    /// same affine function and so leaves the knot increments unchanged.
    fn add_quadratic(&mut self, y: f64) {
        self.left.0 += 1.0;
        self.left.1 -= y;
        self.right.0 += 1.0;
        self.right.1 -= y;
    }

    /// Smallest `x` with `F'(x) ≥ 0`.
    fn zero(&self) -> f64 {
        let (mut a, mut b) = self.left;
        let mut floor = f64::NEG_INFINITY;
        for k in &self.knots {
            if a * k.at + b >= 0.0 {
                return root_in_piece(a, b, 0.0, f64::NEG_INFINITY).max(floor);
            }
            a += k.da;
            b += k.db;
            floor = k.at;
        }
        root_in_piece(a, b, 0.0, f64::NEG_INFINITY).max(floor)
    }

    /// Replaces `F'` by `clamp(F', -λ, λ)` and returns the points where the
    /// clamp switches off `(lo)` and back on `(hi)`.
    fn clip(&mut self) -> (f64, f64) {
        // left side
        let (mut a, mut b) = self.left;
        let mut floor = f64::NEG_INFINITY;
        while let Some(&k) = self.knots.front() {
            if a * k.at + b >= -LAMBDA {
                break;
            }
            a += k.da;
            b += k.db;
            floor = k.at;
            self.knots.pop_front();
        }
        let lo = root_in_piece(a, b, -LAMBDA, f64::NEG_INFINITY).max(floor);
        self.knots.push_front(Knot {
            at: lo,
            da: a,
            db: b + LAMBDA,
        });
        self.left = (0.0, -LAMBDA);

        // right side
        let (mut a, mut b) = self.right;
        let mut ceil = f64::INFINITY;
        while let Some(&k) = self.knots.back() {
            if a * k.at + b <= LAMBDA {
                break;
            }
            a -= k.da;
            b -= k.db;
            ceil = k.at;
            self.knots.pop_back();
        }
        let hi = root_in_piece(a, b, LAMBDA, f64::INFINITY).min(ceil);
        self.knots.push_back(Knot {
            at: hi,
            da: -a,
            db: LAMBDA - b,
        });
        self.right = (0.0, LAMBDA);
        (lo, hi)
    }
}

/// Exact MAP paths of the Laplace/Gaussian model for all horizons
/// `n = 1..=N` of one observation sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceMapDp {
    y: Vec<f64>,
    /// `argmin F_n`, the last coordinate of the horizon-`n` path.
    roots: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl LaplaceMapDp {
    /// Runs the forward pass over `y`. Cost `O(N · K)` where `K` is the
    /// number of live breakpoints, at most `2N`.
    pub fn new(y: &[f64]) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::Empty("observations"));
        }
        if let Some(&bad) = y.iter().find(|v| !v.is_finite()) {
            return Err(Error::OutOfDomain {
                value: bad,
                domain: "finite reals",
            });
        }
        let n = y.len();
        let mut roots = Vec::with_capacity(n);
        let mut lo = Vec::with_capacity(n);
        let mut hi = Vec::with_capacity(n);
        let mut f = PiecewiseDerivative::absolute_value();
        for (m, &ym) in y.iter().enumerate() {
            f.add_quadratic(ym);
            roots.push(f.zero());
            if m + 1 < n {
                let (l, h) = f.clip();
                lo.push(l);
                hi.push(h);
            }
        }
        Ok(LaplaceMapDp {
            y: y.to_vec(),
            roots,
            lo,
            hi,
        })
    }

    pub fn max_horizon(&self) -> usize {
        self.y.len()
    }

    pub fn observations(&self) -> &[f64] {
        &self.y
    }

    /// The MAP path `X̂ⁿ_{1:n}` for observations `y_{1:n}`.
    pub fn path_at(&self, n: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; n];
        self.path_into(n, &mut out)?;
        Ok(out)
    }

    /// As [`path_at`](Self::path_at), writing into the first `n` entries of `out`.
    pub fn path_into(&self, n: usize, out: &mut [f64]) -> Result<()> {
        if n < 1 || n > self.y.len() {
            return Err(Error::invalid("n", "horizon must lie in 1..=N"));
        }
        if out.len() < n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: out.len(),
            });
        }
        let mut x = self.roots[n - 1];
        out[n - 1] = x;
        for m in (0..n - 1).rev() {
            x = x.max(self.lo[m]).min(self.hi[m]);
            out[m] = x;
        }
        Ok(())
    }

    /// First `m` coordinates of the MAP path for every horizon `n = m..=N`.
    /// Every row is exact, so none is skipped; `grad_inf_norm` and
    /// `iterations` are reported as zero.
    pub fn prefix_series(&self, m: usize) -> Result<PrefixSeries> {
        let big = self.y.len();
        if m < 1 || m > big {
            return Err(Error::invalid("m", "prefix length must lie in 1..=N"));
        }
        let mut buf = vec![0.0; big];
        let mut rows = Vec::with_capacity(big - m + 1);
        for n in m..=big {
            self.path_into(n, &mut buf)?;
            rows.push(PrefixRow {
                n,
                prefix: buf[..m].to_vec(),
                objective: laplace_objective(&buf[..n], &self.y[..n])?,
                grad_inf_norm: 0.0,
                iterations: 0,
                increment: None,
            });
        }
        Ok(PrefixSeries {
            m,
            max_horizon: big,
            rows,
            skipped: Vec::new(),
        })
    }
}

/// Result of cyclic coordinate descent on the Laplace objective.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateDescent {
    pub path: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

/// Cyclic coordinate descent with the exact scalar minimizers
/// [`solve_mid`]/[`solve_end`], until no coordinate moves by more than `tol`.
///
/// Cheap and exact per coordinate, but it can stall at non-optimal points
/// where several neighbouring coordinates would have to move together.
pub fn laplace_coordinate_descent(
    y: &[f64],
    start: Option<&[f64]>,
    tol: f64,
    max_sweeps: usize,
) -> Result<CoordinateDescent> {
    if y.is_empty() {
        return Err(Error::Empty("observations"));
    }
    let n = y.len();
    let mut x = match start {
        Some(s) if s.len() != n => {
            return Err(Error::LengthMismatch {
                expected: n,
                got: s.len(),
            })
        }
        Some(s) => s.to_vec(),
        None => y.to_vec(),
    };
    for sweep in 1..=max_sweeps {
        let mut moved: f64 = 0.0;
        for m in 0..n {
            let left = if m == 0 { 0.0 } else { x[m - 1] };
            let new = if m + 1 < n {
                solve_mid(left, x[m + 1], y[m])
            } else {
                solve_end(left, y[m])
            };
            moved = moved.max((new - x[m]).abs());
            x[m] = new;
        }
        if moved < tol {
            return Ok(CoordinateDescent {
                path: x,
                sweeps: sweep,
                converged: true,
            });
        }
    }
    Ok(CoordinateDescent {
        path: x,
        sweeps: max_sweeps,
        converged: false,
    })
}
