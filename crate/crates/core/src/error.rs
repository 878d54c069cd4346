use thiserror::Error;

/// Crate-wide error type. Variants mirror the failure modes of the public
/// operations rather than their call sites, so the same variant can surface
/// from several modules.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("structure contains no usable records")]
    EmptyStructure,

    #[error("complex has no interface residues at the given cutoff")]
    NoInterface,

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("score undefined at t = 1")]
    ScoreSingularity,

    #[error("training diverged at step {step} (loss {loss:.3e})")]
    TrainingDiverged { step: usize, loss: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("external scorer failed: {0}")]
    Scorer(String),

    #[error("candidate {candidate}: {source}")]
    Candidate {
        candidate: usize,
        #[source]
        source: Box<CoreError>,
    },

    #[error("steering collapse: round {round} produced no candidate with a finite reward")]
    SteeringCollapse { round: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
