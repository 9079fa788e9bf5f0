//! Process-level error classification and exit codes.
//!
//! 0 success, 1 runtime failure, 2 configuration error, 3 gateway
//! exhaustion (retries spent, replay miss, endpoint trouble), 4 attempt-cap
//! abort with partial artifacts persisted.

use smishkit_core::pipeline::PipelineError;

#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration or arguments; lists every violation.
    Config(Vec<String>),
    /// Gateway gave up: retries exhausted, replay miss, missing endpoint.
    Gateway(String),
    /// A generation bucket exceeded its request budget; partial artifacts
    /// were written to `run_dir`.
    AttemptCap { bucket: String, run_dir: String },
    /// Re-run produced different bytes than the recorded artifact.
    VerifyMismatch(String),
    /// Anything else.
    Other(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Gateway(_) => 3,
            CliError::AttemptCap { .. } => 4,
            CliError::VerifyMismatch(_) | CliError::Other(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Gateway(_) => "gateway",
            CliError::AttemptCap { .. } => "attempt_cap",
            CliError::VerifyMismatch(_) => "verify_mismatch",
            CliError::Other(_) => "error",
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Config(violations) => violations.join("\n"),
            CliError::Gateway(message) => message.clone(),
            CliError::AttemptCap { bucket, run_dir } => format!(
                "attempt cap reached in bucket {bucket}; partial artifacts in {run_dir}"
            ),
            CliError::VerifyMismatch(message) => message.clone(),
            CliError::Other(error) => format!("{error:#}"),
        }
    }

    /// Machine-readable record printed to stderr on failure.
    pub fn record(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.message(),
        })
        .to_string()
    }
}

impl From<anyhow::Error> for CliError {
    fn from(error: anyhow::Error) -> Self {
        CliError::Other(error)
    }
}

/// Pipeline errors map gateway trouble to exit 3, the rest to 1.
pub fn from_pipeline(error: PipelineError) -> CliError {
    match error {
        PipelineError::Gateway(e) => CliError::Gateway(e.to_string()),
        other => CliError::Other(anyhow::Error::new(other)),
    }
}
