use thiserror::Error;

/// Errors across the certification toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no samples")]
    NoSamples,

    #[error("probability out of range: {0}")]
    InvalidProbability(f64),

    #[error("invalid bound query: {0}")]
    InvalidQuery(String),

    #[error("invalid criterion: {0}")]
    InvalidCriterion(String),

    #[error("invalid record `{question_id}`: {reason}")]
    InvalidRecord { question_id: String, reason: String },

    #[error("unknown explanation id `{0}`")]
    UnknownExplanation(String),

    #[error("invalid explanation registry: {0}")]
    InvalidRegistry(String),

    #[error(
        "record `{question_id}` tagged `{explanation_id}` scores {got}, declared score is {declared}"
    )]
    ScoreMismatch {
        question_id: String,
        explanation_id: String,
        got: f64,
        declared: f64,
    },

    #[error("residual samples required")]
    ResidualSamplesRequired,

    #[error("residual transcript contains tagged record `{0}`")]
    ResidualTagged(String),

    #[error("no adherence observations for {0}")]
    NoAdherenceObservations(String),

    #[error("explanation mass {mass} exceeds remaining residual mass {remaining}")]
    MassExceedsResidual { mass: f64, remaining: f64 },

    #[error("online buffer accepts residual samples only; record `{0}` carries an explanation id")]
    OnlineTaggedRecord(String),

    #[error("invalid agent spec: {0}")]
    InvalidAgent(String),

    #[error("boundary case, guarantee vacuous: {0}")]
    BoundaryCase(String),

    #[error("invalid table spec: {0}")]
    InvalidTableSpec(String),

    #[error("line {line}: {reason}")]
    Ingest { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
