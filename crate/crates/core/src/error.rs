use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A value does not fit into the requested bit width.
    #[error("value {value} does not fit in {width} bits")]
    ValueOutOfRange { value: u64, width: usize },

    /// A bit string length is incompatible with the requested grouping.
    #[error("bit length {length} is not divisible by group size {group}")]
    UnevenPartition { length: usize, group: usize },

    /// Malformed input that no later stage could interpret.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An artifact failed an integrity check during recovery.
    #[error("tamper detected: {0}")]
    Tampered(String),

    /// The solver exhausted every start without reaching feasibility.
    #[error("no feasible point found (best constraint violation {best_violation:.6e})")]
    Infeasible { best_violation: f64 },

    /// A detection stage could not produce the solution it needs.
    #[error("detection failed while solving the {stage} program")]
    DetectionFailed {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn tampered(msg: impl Into<String>) -> Self {
        Error::Tampered(msg.into())
    }
}
