//! Numerical checks of how MAP prefixes settle as the horizon grows.

mod decay;
mod ineq;
mod laplace;
mod sensitivity;

pub use decay::{
    diff_series, empirical_bconv_exponent, fit_line, BconvCheck, BconvOutcome, DecayOptions,
    DecayReport, LinearFit,
};
pub use ineq::{
    bound_b1s, check_lemma_a1, gen_feasible, gen_tight, lemma_a1_bounds, verify_ineq_system,
    IneqCheck, IneqSequences, LemmaA1Bounds, LemmaA1Check,
};
pub use laplace::{
    laplace_event, laplace_events, laplace_stabilization_report, EventCheck, StabilizationReport,
};
pub use sensitivity::{
    check_lemma34, check_lemma34_segment, Lemma34Report, Lemma34Row, SegmentReport,
};
