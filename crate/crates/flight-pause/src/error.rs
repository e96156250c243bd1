//! Crate-wide error type.
//!
//! Library operations return [`Result`]; the binary layers its own context on
//! top. Domain violations (parameters outside their open intervals, motions
//! breaking a structural invariant) are reported with enough detail to point
//! at the offending component or increment.

use crate::model::MotionViolation;

/// Errors produced by model construction, extraction, inference, imputation,
/// and artifact IO.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A scalar argument lies outside its mathematical domain.
    #[error("parameter out of domain: {0}")]
    Domain(String),

    /// A motion failed structural validation; every broken invariant is listed.
    #[error("invalid motion: {}", format_violations(.0))]
    InvalidMotion(Vec<MotionViolation>),

    /// Paired inputs (trajectory/observability, truth/imputations, ...) do not line up.
    #[error("mismatched inputs: {0}")]
    Mismatch(String),

    /// Likelihood evaluation was asked for but no increments were observed.
    #[error("empty extraction: no observed increments to evaluate")]
    EmptyExtraction,

    /// The enumeration oracle was asked to sum over more hidden steps than it allows.
    #[error("gap of {n} time steps exceeds enumeration bound {max}")]
    GapTooLong { n: u64, max: u64 },

    /// The optimizer cannot start from a point with a non-finite objective.
    #[error("non-finite objective at the initial point: {0}")]
    BadStart(String),

    /// A file violated its declared schema; `location` names the file/row.
    #[error("schema error at {location}: {message}")]
    Schema { location: String, message: String },

    /// A pipeline stage failed; wraps the underlying error with the stage name.
    #[error("[stage:{stage}] {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Tag this error with the pipeline stage it arose in; an existing tag
    /// wins, so the innermost stage is the one reported.
    pub fn with_stage(self, stage: &'static str) -> Error {
        match self {
            staged @ Error::Stage { .. } => staged,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }
}

/// Tag any error produced by `result` with `stage`.
pub(crate) fn in_stage<T>(result: Result<T>, stage: &'static str) -> Result<T> {
    result.map_err(|e| e.with_stage(stage))
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

fn format_violations(violations: &[MotionViolation]) -> String {
    let mut parts: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
    if parts.is_empty() {
        parts.push("(no details)".to_owned());
    }
    parts.join("; ")
}
