use rand::{Rng, RngCore};
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::{ContinuousHmm, Cost1, Cost2};
use crate::{Error, Result};

fn finite(name: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::invalid(name, "must be finite"))
    }
}

fn positive(name: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::invalid(name, "must be positive and finite"))
    }
}

fn normal(rng: &mut dyn RngCore) -> f64 {
    StandardNormal.sample(rng)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `X_m = a X_{m-1} + σ v_m`, `Y_m = b X_m + τ w_m` with standard normal
/// noises and `X₁ ~ N(0, init_var)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearGaussian {
    pub a: f64,
    pub b: f64,
    pub state_sd: f64,
    pub obs_sd: f64,
    pub init_var: f64,
}

impl LinearGaussian {
    pub fn new(a: f64, b: f64, state_sd: f64, obs_sd: f64, init_var: f64) -> Result<Self> {
        let b = finite("b", b)?;
        if b == 0.0 {
            return Err(Error::invalid("b", "must be nonzero"));
        }
        Ok(LinearGaussian {
            a: finite("a", a)?,
            b,
            state_sd: positive("state_sd", state_sd)?,
            obs_sd: positive("obs_sd", obs_sd)?,
            init_var: positive("init_var", init_var)?,
        })
    }

    /// Unit noises, `X₁` drawn from the stationary law `N(0, 1 / (1 - a²))`.
    pub fn stationary(a: f64, b: f64) -> Result<Self> {
        if !(a.abs() < 1.0) {
            return Err(Error::invalid("a", "stationary start needs |a| < 1"));
        }
        Self::new(a, b, 1.0, 1.0, 1.0 / (1.0 - a * a))
    }

    /// Costs `u²/2`, `(v - u)²/2`, `(x - y)²/2`.
    pub fn standard() -> Self {
        LinearGaussian {
            a: 1.0,
            b: 1.0,
            state_sd: 1.0,
            obs_sd: 1.0,
            init_var: 1.0,
        }
    }
}

impl ContinuousHmm for LinearGaussian {
    fn init_cost(&self, u: f64) -> Cost1 {
        Cost1 {
            value: 0.5 * u * u / self.init_var,
            d1: u / self.init_var,
            d2: 1.0 / self.init_var,
        }
    }

    fn trans_cost(&self, u: f64, v: f64) -> Cost2 {
        let s2 = self.state_sd * self.state_sd;
        let w = v - self.a * u;
        Cost2 {
            value: 0.5 * w * w / s2,
            du: -self.a * w / s2,
            dv: w / s2,
            duu: self.a * self.a / s2,
            duv: -self.a / s2,
            dvv: 1.0 / s2,
        }
    }

    fn obs_cost(&self, x: f64, y: f64) -> Cost1 {
        let t2 = self.obs_sd * self.obs_sd;
        let r = y - self.b * x;
        Cost1 {
            value: 0.5 * r * r / t2,
            d1: -self.b * r / t2,
            d2: self.b * self.b / t2,
        }
    }

    fn kappa(&self) -> f64 {
        self.b * self.b / (self.obs_sd * self.obs_sd)
    }

    fn coupling_bound(&self, _level: f64) -> f64 {
        self.a.abs() / (self.state_sd * self.state_sd)
    }

    fn obs_argmin(&self, y: f64) -> f64 {
        y / self.b
    }

    fn sample_init(&self, rng: &mut dyn RngCore) -> f64 {
        libm::sqrt(self.init_var) * normal(rng)
    }

    fn sample_transition(&self, u: f64, rng: &mut dyn RngCore) -> f64 {
        self.a * u + self.state_sd * normal(rng)
    }

    fn sample_observation(&self, x: f64, rng: &mut dyn RngCore) -> f64 {
        self.b * x + self.obs_sd * normal(rng)
    }
}

/// Random walk with Laplace increments observed in Gaussian noise:
/// `μ(u) ∝ e^{-|u|/2}`, `q(u, v) ∝ e^{-|u - v|/2}`, `p(x, y) ∝ e^{-(x - y)²/2}`.
///
/// The transition cost is not differentiable on the diagonal; MAP paths for
/// this model come from [`crate::map::LaplaceMapDp`], not from Newton.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LaplaceGaussian;

impl LaplaceGaussian {
    /// Scale of the Laplace increments (density `e^{-|z|/2} / 4`).
    pub const SCALE: f64 = 2.0;

    fn laplace(rng: &mut dyn RngCore) -> f64 {
        let u: f64 = rng.random::<f64>() - 0.5;
        -Self::SCALE * sign(u) * libm::log(1.0 - 2.0 * u.abs())
    }
}

impl ContinuousHmm for LaplaceGaussian {
    fn init_cost(&self, u: f64) -> Cost1 {
        Cost1 {
            value: 0.5 * u.abs(),
            d1: 0.5 * sign(u),
            d2: 0.0,
        }
    }

    fn trans_cost(&self, u: f64, v: f64) -> Cost2 {
        let s = sign(v - u);
        Cost2 {
            value: 0.5 * (v - u).abs(),
            du: -0.5 * s,
            dv: 0.5 * s,
            duu: 0.0,
            duv: 0.0,
            dvv: 0.0,
        }
    }

    fn obs_cost(&self, x: f64, y: f64) -> Cost1 {
        Cost1 {
            value: 0.5 * (x - y) * (x - y),
            d1: x - y,
            d2: 1.0,
        }
    }

    fn kappa(&self) -> f64 {
        1.0
    }

    fn coupling_bound(&self, _level: f64) -> f64 {
        0.0
    }

    fn obs_argmin(&self, y: f64) -> f64 {
        y
    }

    fn sample_init(&self, rng: &mut dyn RngCore) -> f64 {
        Self::laplace(rng)
    }

    fn sample_transition(&self, u: f64, rng: &mut dyn RngCore) -> f64 {
        u + Self::laplace(rng)
    }

    fn sample_observation(&self, x: f64, rng: &mut dyn RngCore) -> f64 {
        x + normal(rng)
    }
}

/// Minimizer of `f(x) = |a - x| + (x - y)² + |x - b|`.
///
/// `y` itself when `a ≤ y ≤ b`, otherwise shifted by one towards the interval
/// or clamped to its nearest endpoint. The arguments are swapped if `a > b`.
pub fn solve_mid(a: f64, b: f64, y: f64) -> f64 {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    if y < a - 1.0 {
        y + 1.0
    } else if y < a {
        a
    } else if y <= b {
        y
    } else if y <= b + 1.0 {
        b
    } else {
        y - 1.0
    }
}

/// Minimizer of `f(x) = |a - x| + (x - y)²` (a coordinate with one neighbour).
pub fn solve_end(a: f64, y: f64) -> f64 {
    if y < a - 0.5 {
        y + 0.5
    } else if y <= a + 0.5 {
        a
    } else {
        y - 0.5
    }
}

/// Linear model with exponential-power noises:
/// `X_m = a X_{m-1} + v_m`, `Y_m = b X_m + w_m`, with
/// `X₁, v_m ∝ e^{-|x|^{2+δ}}` and `w_m ∝ e^{-x²(1 + c|x|^{δ'})}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpPower {
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    pub c: f64,
    pub delta_prime: f64,
}

impl ExpPower {
    pub fn new(a: f64, b: f64, delta: f64, c: f64, delta_prime: f64) -> Result<Self> {
        let b = finite("b", b)?;
        if b == 0.0 {
            return Err(Error::invalid("b", "must be nonzero"));
        }
        let nonneg = |name, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(v)
            } else {
                Err(Error::invalid(name, "must be nonnegative and finite"))
            }
        };
        Ok(ExpPower {
            a: finite("a", a)?,
            b,
            delta: nonneg("delta", delta)?,
            c: nonneg("c", c)?,
            delta_prime: nonneg("delta_prime", delta_prime)?,
        })
    }

    fn power(&self) -> f64 {
        2.0 + self.delta
    }

    /// `|w|^p` with first and second derivatives.
    fn abs_power(w: f64, p: f64) -> Cost1 {
        let aw = w.abs();
        Cost1 {
            value: libm::pow(aw, p),
            d1: p * libm::pow(aw, p - 1.0) * sign(w),
            d2: p * (p - 1.0) * libm::pow(aw, p - 2.0),
        }
    }

    fn state_noise(&self, rng: &mut dyn RngCore) -> f64 {
        // |V|^p ~ Gamma(1/p, 1)
        let p = self.power();
        let g: f64 = Gamma::new(1.0 / p, 1.0)
            .expect("shape is positive")
            .sample(rng);
        let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
        s * libm::pow(g, 1.0 / p)
    }

    fn obs_noise(&self, rng: &mut dyn RngCore) -> f64 {
        // proposal ∝ e^{-w²}, accepted with probability e^{-c|w|^{2+δ'}}
        loop {
            let w = normal(rng) * core::f64::consts::FRAC_1_SQRT_2;
            if self.c == 0.0 {
                return w;
            }
            let accept = libm::exp(-self.c * libm::pow(w.abs(), 2.0 + self.delta_prime));
            if rng.random::<f64>() < accept {
                return w;
            }
        }
    }
}

impl ContinuousHmm for ExpPower {
    fn init_cost(&self, u: f64) -> Cost1 {
        Self::abs_power(u, self.power())
    }

    fn trans_cost(&self, u: f64, v: f64) -> Cost2 {
        let phi = Self::abs_power(v - self.a * u, self.power());
        Cost2 {
            value: phi.value,
            du: -self.a * phi.d1,
            dv: phi.d1,
            duu: self.a * self.a * phi.d2,
            duv: -self.a * phi.d2,
            dvv: phi.d2,
        }
    }

    fn obs_cost(&self, x: f64, y: f64) -> Cost1 {
        let r = y - self.b * x;
        let q = 2.0 + self.delta_prime;
        let extra = Self::abs_power(r, q);
        let psi = Cost1 {
            value: r * r + self.c * extra.value,
            d1: 2.0 * r + self.c * extra.d1,
            d2: 2.0 + self.c * extra.d2,
        };
        Cost1 {
            value: psi.value,
            d1: -self.b * psi.d1,
            d2: self.b * self.b * psi.d2,
        }
    }

    fn kappa(&self) -> f64 {
        // same rounding as obs_cost's d2 at c = 0
        self.b * self.b * 2.0
    }

    fn coupling_bound(&self, level: f64) -> f64 {
        // on {|w|^p ≤ M}: |a| p (p-1) |w|^{p-2} ≤ |a| p (p-1) M^{δ/p}
        let p = self.power();
        self.a.abs() * p * (p - 1.0) * libm::pow(level.max(0.0), self.delta / p)
    }

    fn obs_argmin(&self, y: f64) -> f64 {
        y / self.b
    }

    fn sample_init(&self, rng: &mut dyn RngCore) -> f64 {
        self.state_noise(rng)
    }

    fn sample_transition(&self, u: f64, rng: &mut dyn RngCore) -> f64 {
        self.a * u + self.state_noise(rng)
    }

    fn sample_observation(&self, x: f64, rng: &mut dyn RngCore) -> f64 {
        self.b * x + self.obs_noise(rng)
    }
}
