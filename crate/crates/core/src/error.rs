use crate::dag::FrameId;
use crate::mbfs::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid frame {frame}: {reason}")]
    InvalidFrame { frame: FrameId, reason: String },

    #[error("invalid dependency {parent} -> {child}: {reason}")]
    InvalidEdge {
        parent: FrameId,
        child: FrameId,
        reason: String,
    },

    #[error("dependency graph has a cycle through frame {0}")]
    Cycle(FrameId),

    #[error("deadlines must be strictly increasing: frame {frame} has deadline {deadline}, previous frame {previous}")]
    DeadlineOrder {
        frame: FrameId,
        deadline: u64,
        previous: u64,
    },

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("structure is not supported: {0}")]
    UnsupportedStructure(Violation),

    #[error("expected an {expected} structure, got {actual}")]
    WrongClass {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("invalid sequence: {0}")]
    InvalidSequence(String),

    #[error("transmission of frame {frame} starting at {start} overlaps the previous one ending at {busy_until}")]
    Overlap {
        frame: FrameId,
        start: u64,
        busy_until: u64,
    },

    #[error("instance exceeds oracle limits: {0}")]
    OracleLimit(String),

    #[error("trace line {line}: {reason}")]
    Trace { line: usize, reason: String },

    #[error("invalid number {value:?}: {reason}")]
    Number { value: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable identifier used in machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidFrame { .. } => "invalid_frame",
            Error::InvalidEdge { .. } => "invalid_edge",
            Error::Cycle(_) => "cycle",
            Error::DeadlineOrder { .. } => "deadline_order",
            Error::InvalidParameters(_) => "invalid_parameters",
            Error::UnsupportedStructure(_) => "unsupported_structure",
            Error::WrongClass { .. } => "wrong_class",
            Error::InvalidSequence(_) => "invalid_sequence",
            Error::Overlap { .. } => "overlap",
            Error::OracleLimit(_) => "oracle_limit",
            Error::Trace { .. } => "trace",
            Error::Number { .. } => "number",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
