use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{function}: argument {value} is outside the domain")]
    Domain { function: &'static str, value: f64 },

    #[error("p-value {0} is not in [0, 1]")]
    InvalidPValue(f64),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("degenerate rate {rate} for group `{group}`: standard error would be zero")]
    DegenerateRate { group: String, rate: f64 },

    #[error("invalid group metric for `{group}`: {reason}")]
    InvalidMetric { group: String, reason: String },

    #[error("cannot merge clusters sharing group `{0}`")]
    InvalidMerge(String),

    #[error("cannot compare clusters sharing group `{0}`")]
    InvalidPair(String),

    #[error("duplicate group id `{0}`")]
    DuplicateGroup(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("{} degenerate group(s): {}", .0.len(), format_group_errors(.0))]
    DegenerateGroups(Vec<(String, String)>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_group_errors(errors: &[(String, String)]) -> String {
    errors
        .iter()
        .map(|(id, why)| format!("`{id}` ({why})"))
        .collect::<Vec<_>>()
        .join(", ")
}

pub type Result<T> = std::result::Result<T, Error>;
