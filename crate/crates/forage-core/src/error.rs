//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("arena generation failed for seed {seed} after {attempts} attempts (no connected layout)")]
    WorldGen { seed: u64, attempts: u32 },

    #[error("environment contract violation: {0}")]
    EnvContract(String),

    #[error("numeric fault: {0}")]
    NumericFault(String),

    #[error("log format error: {0}")]
    LogFormat(String),

    #[error("replay mismatch at t={t}, field `{field}`: logged {logged}, replayed {replayed}")]
    ReplayMismatch {
        t: usize,
        field: String,
        logged: String,
        replayed: String,
    },

    #[error("config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("decoding error: {0}")]
    Decoding(String),

    #[error("linear solve failed: {0}")]
    Solver(String),

    #[error("GLM error: {0}")]
    Glm(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),
}
