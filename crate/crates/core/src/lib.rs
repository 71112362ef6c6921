//! MAP (Viterbi) path estimation for hidden Markov models with continuous and
//! discrete state spaces, together with the numerical machinery used to study
//! how the optimal path stabilizes as the observation horizon grows.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration
//! and the command line live in the companion `hmmlab` crate.
//!
//! Layout:
//!
//! - [`model`]: continuous and discrete model abstractions, the bundled example
//!   models, the negative log-likelihood `h_n`, assumption checks and sampling.
//! - [`map`]: damped Newton on the tridiagonal Hessian of `h_n`, the
//!   tail-anchored variant, influence Jacobians, prefix series, and the exact
//!   solver for the Laplace/Gaussian model.
//! - [`viterbi`]: discrete Viterbi decoding, brute-force oracle, dominance sets,
//!   renewal times and survivor coalescence.
//! - [`divergence`]: the interval-observation model whose MAP level diverges.
//! - [`convergence`]: decay fits, sensitivity inequalities, the sequence
//!   inequality system and its bounds, and the Laplace freezing report.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod convergence;
pub mod divergence;
mod error;
pub mod map;
pub mod model;
pub mod rng;
pub mod tridiag;
pub mod viterbi;

pub use error::{Error, Result};
