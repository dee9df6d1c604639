use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("triangle inequality fails: d({0},{1}) > d({0},{2}) + d({2},{1})")]
    AxiomViolation(String, String, String),
    #[error("distance d({0},{1}) is not a valid metric entry: {2}")]
    MetricEntry(String, String, String),
    #[error("distance d({0},{1}) = {2} lies outside [0,1]")]
    OutOfRange(String, String, String),
    #[error("duplicate point label {0}")]
    DuplicateLabel(String),
    #[error("unknown point {0}")]
    UnknownPoint(String),
    #[error("weights do not form a probability distribution: {0}")]
    WeightsNotNormalized(String),
    #[error("coupling marginal mismatch on the {side} side at {point}")]
    MarginalMismatch { side: String, point: String },
    #[error("arguments live over different spaces")]
    SpaceMismatch,
    #[error("instance too large for enumeration: {0}")]
    TooLarge(String),
    #[error("empty set")]
    EmptySet,
    #[error("empty generator list")]
    EmptyInput,
    #[error("probability {0} is not strictly between 0 and 1")]
    BadProbability(String),
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("invalid derivation at node {path:?}: {msg}")]
    InvalidDerivation { path: Vec<usize>, msg: String },
    #[error("malformed input: {0}")]
    Format(String),
}

impl Error {
    /// Stable machine-readable tag used by the CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::AxiomViolation(..) => "AxiomViolation",
            Error::MetricEntry(..) => "MetricEntry",
            Error::OutOfRange(..) => "OutOfRange",
            Error::DuplicateLabel(_) => "DuplicateLabel",
            Error::UnknownPoint(_) => "UnknownPoint",
            Error::WeightsNotNormalized(_) => "WeightsNotNormalized",
            Error::MarginalMismatch { .. } => "MarginalMismatch",
            Error::SpaceMismatch => "SpaceMismatch",
            Error::TooLarge(_) => "TooLarge",
            Error::EmptySet => "EmptySet",
            Error::EmptyInput => "EmptyInput",
            Error::BadProbability(_) => "BadProbability",
            Error::Syntax { .. } => "SyntaxError",
            Error::InvalidDerivation { .. } => "InvalidDerivation",
            Error::Format(_) => "Format",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
