use thiserror::Error;

/// Errors produced by dataset handling, model growing, and rule evaluation.
#[derive(Debug, Error)]
pub enum Error {
    /// Column layout problems: missing columns, duplicate names, unknown features.
    #[error("schema error: {0}")]
    Schema(String),

    /// Malformed cell contents or unusable row data.
    #[error("data error: {0}")]
    Data(String),

    /// Invalid parameters or option combinations.
    #[error("config error: {0}")]
    Config(String),

    /// Model growth or model file problems.
    #[error("model error: {0}")]
    Model(String),

    /// Metric preconditions violated (e.g. no positive examples for TPR).
    #[error("metric error: {0}")]
    Metric(String),

    #[error("rule error: {0}")]
    Rule(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
