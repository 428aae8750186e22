//! Error type shared by every pipeline stage.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: unknown keys, unparseable values, bad flag
    /// combinations. Maps to exit code 2.
    #[error("config error: {0}")]
    Config(String),

    /// A required upstream artifact is missing. The message names the
    /// command that produces it. Maps to exit code 3.
    #[error("dependency error: {0}")]
    Dependency(String),

    /// Input data violates a contract (corrupt replay, missing scores,
    /// degenerate labels, ...). Maps to exit code 4.
    #[error("data error: {0}")]
    Data(String),

    /// More than half of the replay lines failed to parse.
    #[error("corrupt input: {malformed} of {total} lines malformed")]
    CorruptInput { malformed: u64, total: u64 },

    /// Sidecar toxicity scores were requested but a post carries none.
    #[error("missing toxicity scores for post event `{event_id}`")]
    MissingToxicity { event_id: String },

    /// Quantile thresholding produced an empty positive class.
    #[error(
        "degenerate threshold: {definition} quantile {quantile} gives threshold \
         {threshold} with no positive labels"
    )]
    DegenerateThreshold {
        definition: String,
        quantile: f64,
        threshold: f64,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the CLI: 0 ok, 2 config, 3 dependency, 4 data.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Dependency(_) => 3,
            _ => 4,
        }
    }
}
