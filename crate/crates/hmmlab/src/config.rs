//! Experiment configuration, loaded from JSON.
//!
//! ```json
//! {
//!   "model": {"kind": "linear_gaussian", "a": 0.9, "b": 1.0},
//!   "n": 60,
//!   "m": 1,
//!   "seeds": [7],
//!   "out": "runs/converge"
//! }
//! ```
//!
//! Every object rejects unknown fields. Command-line flags override the
//! matching file values.

use std::path::PathBuf;

use hmmlab_core::divergence::DivergenceModel;
use hmmlab_core::map::SolverConfig;
use hmmlab_core::model::{
    ContinuousHmm, DiscreteHmm, ExpPower, GaussianEmission, LaplaceGaussian, LinearGaussian,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const MODEL_KINDS: [&str; 5] = [
    "linear_gaussian",
    "laplace_gaussian",
    "exp_power",
    "discrete_gaussian",
    "divergence",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Simulate,
    Map,
    Viterbi,
    Converge,
    Diverge,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Map => "map",
            Command::Viterbi => "viterbi",
            Command::Converge => "converge",
            Command::Diverge => "diverge",
            Command::Verify => "verify",
        }
    }
}

fn one() -> f64 {
    1.0
}

fn default_eps() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// `init_var` defaults to the stationary variance when `|a| < 1`, else 1.
    LinearGaussian {
        a: f64,
        b: f64,
        #[serde(default = "one")]
        state_sd: f64,
        #[serde(default = "one")]
        obs_sd: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        init_var: Option<f64>,
    },
    LaplaceGaussian {},
    ExpPower {
        a: f64,
        b: f64,
        delta: f64,
        c: f64,
        delta_prime: f64,
    },
    /// `trans` is a list of rows.
    DiscreteGaussian {
        init: Vec<f64>,
        trans: Vec<Vec<f64>>,
        means: Vec<f64>,
        sds: Vec<f64>,
    },
    Divergence {
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

/// A validated, ready-to-use model.
pub enum Model {
    Continuous(Box<dyn ContinuousHmm>),
    /// Solved by the exact dynamic program instead of Newton.
    Laplace(LaplaceGaussian),
    Discrete(DiscreteHmm<GaussianEmission>),
    Divergence(DivergenceModel),
}

impl ModelSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelSpec::LinearGaussian { .. } => MODEL_KINDS[0],
            ModelSpec::LaplaceGaussian {} => MODEL_KINDS[1],
            ModelSpec::ExpPower { .. } => MODEL_KINDS[2],
            ModelSpec::DiscreteGaussian { .. } => MODEL_KINDS[3],
            ModelSpec::Divergence { .. } => MODEL_KINDS[4],
        }
    }

    pub fn build(&self) -> Result<Model, CliError> {
        let m = match *self {
            ModelSpec::LinearGaussian {
                a,
                b,
                state_sd,
                obs_sd,
                init_var,
            } => {
                let p0 = init_var.unwrap_or(if a.abs() < 1.0 {
                    state_sd * state_sd / (1.0 - a * a)
                } else {
                    1.0
                });
                Model::Continuous(Box::new(LinearGaussian::new(a, b, state_sd, obs_sd, p0)?))
            }
            ModelSpec::LaplaceGaussian {} => Model::Laplace(LaplaceGaussian),
            ModelSpec::ExpPower {
                a,
                b,
                delta,
                c,
                delta_prime,
            } => Model::Continuous(Box::new(ExpPower::new(a, b, delta, c, delta_prime)?)),
            ModelSpec::DiscreteGaussian {
                ref init,
                ref trans,
                ref means,
                ref sds,
            } => {
                let d = init.len();
                if trans.len() != d || trans.iter().any(|r| r.len() != d) {
                    return Err(CliError::Input(format!(
                        "discrete_gaussian: trans must be a {d}x{d} matrix"
                    )));
                }
                let flat = trans.iter().flatten().copied().collect();
                let emit = GaussianEmission::new(means.clone(), sds.clone())?;
                Model::Discrete(DiscreteHmm::new(init.clone(), flat, emit)?)
            }
            ModelSpec::Divergence { eps } => Model::Divergence(DivergenceModel::new(eps)?),
        };
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub grad_tol: f64,
    pub max_iters: usize,
    pub line_search_shrink: f64,
    pub fd_step: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let c = SolverConfig::default();
        SolverSpec {
            grad_tol: c.grad_tol,
            max_iters: c.max_iters,
            line_search_shrink: c.line_search_shrink,
            fd_step: c.fd_step,
        }
    }
}

impl SolverSpec {
    pub fn config(&self) -> Result<SolverConfig, CliError> {
        let c = SolverConfig {
            grad_tol: self.grad_tol,
            max_iters: self.max_iters,
            line_search_shrink: self.line_search_shrink,
            fd_step: self.fd_step,
        };
        c.validate()?;
        Ok(c)
    }
}

/// Tolerances for the assertions each command makes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Freezing tolerance for the Laplace model.
    pub freeze: f64,
    /// Relative tolerance of the sensitivity inequality rows.
    pub lemma34_rel: f64,
    /// Chain-rule agreement, as a multiple of `grad_tol`.
    pub chain_rule_factor: f64,
    /// Minimum r² of the exponential decay fit.
    pub decay_r2: f64,
    /// Subtracted prefix differences at or below this are rounding noise.
    pub noise_floor: f64,
    /// Viterbi score agreement with the exhaustive oracle.
    pub score: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            freeze: 1e-8,
            lemma34_rel: 1e-4,
            chain_rule_factor: 10.0,
            decay_r2: 0.95,
            noise_floor: 1e-12,
            score: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeSpec {
    /// 1-based prefix coordinate whose differences are fitted.
    pub coordinate: usize,
    pub beta: f64,
    /// Inclusive window on `n`; defaults to `[10, N]` when `N > 20`.
    pub window: Option<(usize, usize)>,
}

impl Default for ConvergeSpec {
    fn default() -> Self {
        ConvergeSpec {
            coordinate: 1,
            beta: 2.0,
            window: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DivergeSpec {
    /// `j*(N)` must reach this level ...
    pub jstar_threshold: usize,
    /// ... in at least this fraction of the seeds.
    pub min_fraction: f64,
}

impl Default for DivergeSpec {
    fn default() -> Self {
        DivergeSpec {
            jstar_threshold: 3,
            min_fraction: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyCheck {
    /// Inequality system and the `b₁` bound on generated sequences.
    LemmaA1,
    /// Sensitivity inequality rows along a random segment of tail values.
    Lemma34,
    /// Constrained prefix against the unconstrained solution.
    ChainRule,
    /// Grid checks of the model assumptions.
    Assumptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    pub check: VerifyCheck,
    /// Bound on the `c_i` for `lemma_a1`.
    #[serde(default = "one")]
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Informational; the command given on the command line wins.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    /// Horizon `n` (or `N` for series commands).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Prefix length tracked by `converge`.
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub converge: ConvergeSpec,
    #[serde(default)]
    pub diverge: DivergeSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifySpec>,
}

fn default_m() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            if msg.contains("unknown variant") && msg.contains("linear_gaussian") {
                CliError::Input(format!(
                    "config: {msg}; supported model kinds: {}",
                    MODEL_KINDS.join(", ")
                ))
            } else {
                CliError::Input(format!("config: {msg}"))
            }
        })
    }

    /// Schema checks that serde cannot express.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.seeds.is_empty() {
            return Err(CliError::Input("seeds must be non-empty".into()));
        }
        if self.n == Some(0) {
            return Err(CliError::Input("n must be at least 1".into()));
        }
        if self.m == 0 {
            return Err(CliError::Input("m must be at least 1".into()));
        }
        if self.jobs == Some(0) {
            return Err(CliError::Input("jobs must be at least 1".into()));
        }
        self.solver.config()?;
        Ok(())
    }

    pub fn horizon(&self) -> Result<usize, CliError> {
        self.n
            .ok_or_else(|| CliError::Input("n is required for this command".into()))
    }

    pub fn model(&self) -> Result<Model, CliError> {
        self.model
            .as_ref()
            .ok_or_else(|| {
                CliError::Input(format!(
                    "a model is required; supported kinds: {}",
                    MODEL_KINDS.join(", ")
                ))
            })?
            .build()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_config() {
        let c = ExperimentConfig::from_json(
            r#"{"model":{"kind":"linear_gaussian","a":0.9,"b":1.0},"n":60,"seeds":[7]}"#,
        )
        .unwrap();
        c.validate().unwrap();
        assert_eq!(c.m, 1);
        assert!(matches!(c.model().unwrap(), Model::Continuous(_)));
    }

    #[test]
    fn unknown_kind_lists_supported_kinds() {
        let e =
            ExperimentConfig::from_json(r#"{"model":{"kind":"heston"},"seeds":[1]}"#).unwrap_err();
        let msg = e.to_string();
        for k in MODEL_KINDS {
            assert!(msg.contains(k), "{msg}");
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"seeds":[1],"horizon":3}"#).is_err());
        assert!(ExperimentConfig::from_json(
            r#"{"model":{"kind":"divergence","eps":0.1,"extra":1},"seeds":[1]}"#
        )
        .is_err());
    }

    #[test]
    fn validation() {
        let c = ExperimentConfig::from_json(r#"{"seeds":[]}"#).unwrap();
        assert!(c.validate().is_err());
        let c = ExperimentConfig::from_json(r#"{"seeds":[1],"n":0}"#).unwrap();
        assert!(c.validate().is_err());
        let c = ExperimentConfig::from_json(
            r#"{"model":{"kind":"discrete_gaussian","init":[0.5,0.5],"trans":[[1.0]],"means":[0,1],"sds":[1,1]},"seeds":[1]}"#,
        )
        .unwrap();
        assert!(c.model().is_err());
    }
}
