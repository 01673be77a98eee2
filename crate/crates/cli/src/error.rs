use std::path::PathBuf;

use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("numerical failure during {stage}: {source}")]
    Numerical {
        stage: &'static str,
        #[source]
        source: tfslab_core::Error,
    },

    #[error("I/O failure on {}: {message}", path.display())]
    Io { path: PathBuf, message: String },

    #[error("self-test failed: {failed}")]
    Selftest { failed: String },
}

impl CliError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }

    pub fn numerical(stage: &'static str) -> impl Fn(tfslab_core::Error) -> Self {
        move |source| CliError::Numerical { stage, source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Selftest { .. } => 1,
            CliError::Config { .. } => 2,
            CliError::Numerical { .. } => 3,
            CliError::Io { .. } => 4,
        }
    }

    /// Machine-readable form printed on failure.
    pub fn to_json(&self) -> serde_json::Value {
        let detail = match self {
            CliError::Config { field, message } => json!({"kind": "config", "field": field, "message": message}),
            CliError::Numerical { stage, source } => {
                json!({"kind": "numerical", "stage": stage, "message": source.to_string()})
            }
            CliError::Io { path, message } => json!({"kind": "io", "path": path.display().to_string(), "message": message}),
            CliError::Selftest { failed } => json!({"kind": "selftest", "failed": failed}),
        };
        json!({"error": detail, "exit_code": self.exit_code()})
    }
}
