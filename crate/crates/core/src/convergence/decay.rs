//! Decay of consecutive-horizon differences `d_n = |X̂ⁿ⁺¹_m - X̂ⁿ_m|`.

use alloc::vec::Vec;

use crate::map::PrefixSeries;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayOptions {
    /// Prefix coordinate to track, 0-based.
    pub coordinate: usize,
    /// Fraction of leading horizons discarded as transient when no explicit
    /// window is given.
    pub transient_frac: f64,
    /// Explicit inclusive window `(n_lo, n_hi)` on the difference index `n`.
    pub window: Option<(usize, usize)>,
    /// Differences taken by subtracting two prefixes at or below this are
    /// treated as zero: they are at the rounding level of the solver and
    /// carry no rate information. Resolved increments are exempt.
    pub noise_floor: f64,
    /// Differences at or below this count as "no change" for the
    /// stabilization flag.
    pub stabilization_tol: f64,
}

impl Default for DecayOptions {
    fn default() -> Self {
        DecayOptions {
            coordinate: 0,
            transient_frac: 0.1,
            window: None,
            noise_floor: 1e-12,
            stabilization_tol: 1e-8,
        }
    }
}

/// Least-squares line `y ≈ slope·x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination; 1 for a perfect fit, including a
    /// constant response.
    pub r2: f64,
    pub points: usize,
}

/// Ordinary least squares; needs at least two distinct abscissae.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    let r2 = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Some(LinearFit {
        slope,
        intercept,
        r2,
        points: n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    pub coordinate: usize,
    /// `(n, d_n)` for every pair of consecutive solved horizons.
    pub series: Vec<(usize, f64)>,
    /// Per entry of `series`: `d_n` came from a resolved increment rather
    /// than a subtraction.
    pub resolved: Vec<bool>,
    /// Fit of `ln d_n` against `n`; its slope is the exponential rate.
    pub exp_fit: Option<LinearFit>,
    /// Fit of `ln d_n` against `ln n`; its slope is the polynomial exponent.
    pub poly_fit: Option<LinearFit>,
    pub window: (usize, usize),
    /// Every difference in the window is within `stabilization_tol`.
    pub exactly_stabilized: bool,
    /// Smallest `n` from which every later difference is within
    /// `stabilization_tol`, if the last one is.
    pub stabilized_from: Option<usize>,
}

impl DecayReport {
    pub fn exp_rate(&self) -> Option<f64> {
        self.exp_fit.map(|f| f.slope)
    }

    pub fn poly_exponent(&self) -> Option<f64> {
        self.poly_fit.map(|f| f.slope)
    }

    fn in_window(&self) -> impl Iterator<Item = &(usize, f64)> {
        let (lo, hi) = self.window;
        self.series
            .iter()
            .filter(move |(n, _)| *n >= lo && *n <= hi)
    }

    /// Window entries with subtraction noise below `floor` zeroed.
    fn floored_window(&self, floor: f64) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = self.window;
        self.series
            .iter()
            .zip(&self.resolved)
            .filter(move |((n, _), _)| *n >= lo && *n <= hi)
            .map(move |(&(n, d), &exact)| (n, if exact || d > floor { d } else { 0.0 }))
    }
}

/// Differences of coordinate `options.coordinate` across consecutive
/// horizons, with exponential and polynomial decay fits over the window.
pub fn diff_series(ps: &PrefixSeries, options: &DecayOptions) -> Result<DecayReport> {
    if ps.rows.len() < 10 {
        return Err(Error::invalid(
            "ps",
            "at least 10 solved horizons are required",
        ));
    }
    if options.coordinate >= ps.m {
        return Err(Error::invalid(
            "coordinate",
            "must be below the prefix length",
        ));
    }
    let k = options.coordinate;
    let (series, resolved): (Vec<(usize, f64)>, Vec<bool>) = ps
        .rows
        .windows(2)
        .filter(|w| w[1].n == w[0].n + 1)
        .map(|w| match &w[1].increment {
            Some(inc) => ((w[0].n, inc[k].abs()), true),
            None => ((w[0].n, (w[1].prefix[k] - w[0].prefix[k]).abs()), false),
        })
        .unzip();
    if series.is_empty() {
        return Err(Error::invalid("ps", "no consecutive horizons"));
    }
    let first = series[0].0;
    let last = series[series.len() - 1].0;
    let window = match options.window {
        Some((lo, hi)) if lo <= hi => (lo, hi),
        Some(_) => return Err(Error::invalid("window", "lower end exceeds upper end")),
        None => {
            let skip = libm::ceil(options.transient_frac * (last - first + 1) as f64) as usize;
            (first + skip, last)
        }
    };

    let mut report = DecayReport {
        coordinate: k,
        series,
        resolved,
        exp_fit: None,
        poly_fit: None,
        window,
        exactly_stabilized: false,
        stabilized_from: None,
    };

    let tol = options.stabilization_tol;
    let stabilized = report.in_window().all(|(_, d)| *d <= tol);
    report.exactly_stabilized = stabilized;
    let mut from = None;
    for &(n, d) in report.series.iter().rev() {
        if d > tol {
            break;
        }
        from = Some(n);
    }
    report.stabilized_from = from;

    if !stabilized {
        let (ns, ls): (Vec<f64>, Vec<f64>) = report
            .floored_window(options.noise_floor)
            .filter(|(_, d)| *d > 0.0)
            .map(|(n, d)| (n as f64, libm::log(d)))
            .unzip();
        if ns.len() >= 3 {
            let logs: Vec<f64> = ns.iter().map(|n| libm::log(*n)).collect();
            report.exp_fit = fit_line(&ns, &ls);
            report.poly_fit = fit_line(&logs, &ls);
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BconvOutcome {
    Pass,
    Fail,
    /// Too few nonzero differences to fit the constant.
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BconvCheck {
    pub outcome: BconvOutcome,
    pub beta: f64,
    /// `C = max d_n·n^β` over the first quarter of the window.
    pub constant: f64,
    /// Largest `d_n·n^β / C` over the remaining window.
    pub worst_ratio: f64,
}

/// Tests `d_n ≤ C·n^{-β}` with `C` fitted on the first quarter of the window
/// and checked on the rest.
pub fn empirical_bconv_exponent(
    report: &DecayReport,
    beta: f64,
    noise_floor: f64,
) -> Result<BconvCheck> {
    if !(beta > 0.0) {
        return Err(Error::invalid("beta", "must be positive"));
    }
    let pts: Vec<(usize, f64)> = report.floored_window(noise_floor).collect();
    let inconclusive = BconvCheck {
        outcome: BconvOutcome::Inconclusive,
        beta,
        constant: f64::NAN,
        worst_ratio: f64::NAN,
    };
    if pts.len() < 8 {
        return Ok(inconclusive);
    }
    let q = pts.len() / 4;
    let scaled = |&(n, d): &(usize, f64)| -> f64 { d * libm::pow(n as f64, beta) };
    let constant = pts[..q].iter().map(scaled).fold(0.0, f64::max);
    if !(constant > 0.0) {
        return Ok(inconclusive);
    }
    let worst_ratio = pts[q..].iter().map(scaled).fold(0.0, f64::max) / constant;
    Ok(BconvCheck {
        outcome: if worst_ratio <= 1.0 {
            BconvOutcome::Pass
        } else {
            BconvOutcome::Fail
        },
        beta,
        constant,
        worst_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::PrefixRow;
    use alloc::vec;

    fn series_from(values: &[f64]) -> PrefixSeries {
        // prefix value at horizon n is the running sum of the differences
        let mut x = 0.0;
        let mut rows = vec![PrefixRow {
            n: 1,
            prefix: vec![x],
            objective: 0.0,
            grad_inf_norm: 0.0,
            iterations: 0,
            increment: None,
        }];
        for (k, d) in values.iter().enumerate() {
            x += d;
            rows.push(PrefixRow {
                n: k + 2,
                prefix: vec![x],
                objective: 0.0,
                grad_inf_norm: 0.0,
                iterations: 0,
                increment: None,
            });
        }
        PrefixSeries {
            m: 1,
            max_horizon: values.len() + 1,
            rows,
            skipped: vec![],
        }
    }

    #[test]
    fn constant_differences() {
        let ps = series_from(&[1.0; 40]);
        let r = diff_series(&ps, &DecayOptions::default()).unwrap();
        assert!(r.exp_rate().unwrap().abs() < 1e-12);
        assert!(r.poly_exponent().unwrap().abs() < 1e-12);
        assert!(!r.exactly_stabilized);
        let b = empirical_bconv_exponent(&r, 1.0, 1e-12).unwrap();
        assert_eq!(b.outcome, BconvOutcome::Fail);
    }

    #[test]
    fn geometric_differences() {
        let vals: Vec<f64> = (0..40).map(|k| libm::pow(0.5, k as f64)).collect();
        let r = diff_series(&series_from(&vals), &DecayOptions::default()).unwrap();
        let f = r.exp_fit.unwrap();
        assert!((f.slope - libm::log(0.5)).abs() < 1e-9);
        assert!(f.r2 > 0.999_999);
        let b = empirical_bconv_exponent(&r, 2.0, 1e-12).unwrap();
        assert_eq!(b.outcome, BconvOutcome::Pass);
    }

    #[test]
    fn zero_tail_is_stabilization() {
        let mut vals = vec![0.3, 0.2, 0.1];
        vals.extend([0.0; 20]);
        let r = diff_series(&series_from(&vals), &DecayOptions::default()).unwrap();
        assert!(r.exactly_stabilized);
        assert_eq!(r.stabilized_from, Some(4));
        assert!(r.exp_fit.is_none());
        let b = empirical_bconv_exponent(&r, 2.0, 1e-12).unwrap();
        assert_eq!(b.outcome, BconvOutcome::Inconclusive);
    }

    #[test]
    fn resolved_increments_skip_the_floor() {
        let mut ps = series_from(&[0.0; 30]);
        for (k, row) in ps.rows.iter_mut().enumerate().skip(1) {
            row.increment = Some(vec![libm::exp(-(k as f64))]);
        }
        let opts = DecayOptions {
            stabilization_tol: 0.0,
            ..DecayOptions::default()
        };
        let r = diff_series(&ps, &opts).unwrap();
        assert!(r.resolved.iter().all(|&e| e));
        let f = r.exp_fit.unwrap();
        assert_eq!(f.points, r.series.len() - 3);
        assert!((f.slope + 1.0).abs() < 1e-12);
        assert!(r.series.last().unwrap().1 < 1e-12);
    }

    #[test]
    fn preconditions() {
        assert!(diff_series(&series_from(&[1.0; 5]), &DecayOptions::default()).is_err());
        let opts = DecayOptions {
            coordinate: 1,
            ..DecayOptions::default()
        };
        assert!(diff_series(&series_from(&[1.0; 20]), &opts).is_err());
    }

    #[test]
    fn line_fit() {
        let f = fit_line(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-15 && (f.intercept - 1.0).abs() < 1e-15);
        assert_eq!(f.r2, 1.0);
        assert!(fit_line(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }
}
