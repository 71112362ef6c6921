use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("value {value} outside the domain {domain}")]
    OutOfDomain { value: f64, domain: &'static str },
    #[error("evaluator returned a non-finite value at ({x}, {y})")]
    Evaluation { x: f64, y: f64 },
    #[error("objective is not convex along the Newton direction (iteration {iteration})")]
    NotConvex { iteration: usize },
    #[error("solver did not converge: {0}")]
    NotConverged(&'static str),
    #[error("every state has zero emission density at time index {index}")]
    DegenerateObservation { index: usize },
    #[error("instance too large: {size} exceeds the limit {limit}")]
    TooLarge { size: u128, limit: u128 },
    #[error("failed to generate a feasible sequence after {attempts} attempts")]
    Generation { attempts: usize },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
