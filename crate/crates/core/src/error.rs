use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("logarithm is ambiguous at rotation angle {angle} (principal branch excludes pi)")]
    LogBranch { angle: f64 },
    #[error("similarity scale must be positive, got {0}")]
    InvalidScale(f64),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("timestamps must be strictly increasing (index {index})")]
    NonMonotonicTimestamps { index: usize },
    #[error("invalid edge: {0}")]
    InvalidEdge(String),
    #[error("invalid loop candidate: {0}")]
    InvalidCandidate(String),
    #[error("odometry chain is broken at node {0}")]
    DisconnectedChain(usize),
    #[error("degenerate alignment input: {0}")]
    DegenerateAlignment(String),
    #[error("sequences have different lengths ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("trajectories are not index-corresponded: {0}")]
    Misaligned(String),
    #[error("metrics need both positive and negative labels")]
    SingleClass,
    #[error("unsatisfiable request: {0}")]
    Unsatisfiable(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("out-of-order keyframe: timestamp {timestamp} does not exceed {last}")]
    OutOfOrderKeyframe { timestamp: f64, last: f64 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// Short stable identifier, used for machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::LogBranch { .. } => "log_branch",
            Error::InvalidScale(_) => "invalid_scale",
            Error::TooFewPoints { .. } => "too_few_points",
            Error::NonMonotonicTimestamps { .. } => "non_monotonic_timestamps",
            Error::InvalidEdge(_) => "invalid_edge",
            Error::InvalidCandidate(_) => "invalid_candidate",
            Error::DisconnectedChain(_) => "disconnected_chain",
            Error::DegenerateAlignment(_) => "degenerate_alignment",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::Misaligned(_) => "misaligned",
            Error::SingleClass => "single_class",
            Error::Unsatisfiable(_) => "unsatisfiable",
            Error::InvalidConfig(_) => "invalid_config",
            Error::OutOfOrderKeyframe { .. } => "out_of_order_keyframe",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }
}
