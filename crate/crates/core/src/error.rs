use thiserror::Error;

/// Errors raised anywhere in the simulation / estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no complete cycle in the event stream")]
    EmptyStream,

    #[error("rejection sampler stalled: acceptance rate {rate:.3e} below 1e-6")]
    RejectionStall { rate: f64 },

    #[error("true density unavailable for model `{0}`")]
    Unavailable(String),

    #[error("oracle unavailable: {0}")]
    OracleUnavailable(String),

    #[error("denominator {min:.3e} fell below floor {floor:.3e} at nu = {nu}")]
    DenominatorFloor { nu: f64, min: f64, floor: f64 },

    #[error("non-finite value produced at nu = {nu}")]
    NanDetected { nu: f64 },

    #[error("exponent {exponent:.1} exceeds overflow cap 700 ({context})")]
    Overflow { exponent: f64, context: &'static str },

    #[error("omega grid too coarse: {points} points, at least {required} needed")]
    Resolution { points: usize, required: usize },

    #[error("invalid mark ({x}, {y}): both coordinates must be positive")]
    InvalidMark { x: f64, y: f64 },

    #[error("invalid event stream: {0}")]
    InvalidEvents(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{origin}:{line}: {message}")]
    ConfigLine { origin: String, line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 1 config, 2 data, 3 numerical guard.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::ConfigLine { .. } => 1,
            Error::EmptyStream
            | Error::InvalidMark { .. }
            | Error::InvalidEvents(_)
            | Error::Parse { .. }
            | Error::Io(_)
            | Error::Json(_)
            | Error::Unavailable(_)
            | Error::OracleUnavailable(_) => 2,
            Error::RejectionStall { .. }
            | Error::DenominatorFloor { .. }
            | Error::NanDetected { .. }
            | Error::Overflow { .. }
            | Error::Resolution { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
