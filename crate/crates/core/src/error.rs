use thiserror::Error;

use crate::statement::BeliefId;

#[derive(Debug, Error)]
pub enum KbError {
    #[error("schema violation: {0}")]
    SchemaViolation(String),

    #[error("storage failure: {0}")]
    StorageFailure(String),

    #[error("dangling premise {0}: unknown or retracted")]
    DanglingPremise(BeliefId),

    #[error("unknown rule '{0}'")]
    UnknownRule(String),

    #[error("unknown belief {0}")]
    UnknownBelief(BeliefId),

    #[error("belief {0} is already retracted")]
    AlreadyRetracted(BeliefId),

    #[error("justification would make {0} depend on itself")]
    CycleDetected(BeliefId),

    #[error("corrupt event log at seq {seq}: {reason}")]
    CorruptLog { seq: u64, reason: String },

    #[error("rule '{rule}' violates stratification against '{conflicting}': {reason}")]
    StratificationViolation {
        rule: String,
        conflicting: String,
        reason: String,
    },

    #[error("rule '{rule_id}' version {version} is already registered")]
    DuplicateRule { rule_id: String, version: u32 },

    #[error("invalid rule configuration for '{rule_id}': {reason}")]
    InvalidRuleConfig { rule_id: String, reason: String },

    #[error("fixpoint did not converge after {passes} passes; oscillating: {}", oscillating.join(", "))]
    DivergenceGuard {
        passes: usize,
        oscillating: Vec<String>,
    },

    #[error("unknown assessment subject: {0}")]
    UnknownSubject(String),

    #[error("invalid assessment: {0}")]
    InvalidAssessment(String),

    #[error(transparent)]
    Ingest(#[from] IngestError),
}

impl From<std::io::Error> for KbError {
    fn from(err: std::io::Error) -> Self {
        KbError::StorageFailure(err.to_string())
    }
}

/// Report-level ingestion failures. Per-entry problems are reported as skips instead.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IngestError {
    #[error("unknown report format: {0}")]
    UnknownFormat(String),

    #[error("malformed report at {path}: {reason}")]
    MalformedReport { path: String, reason: String },

    #[error("invalid raw report: {0}")]
    InvalidRawReport(String),
}

pub type Result<T, E = KbError> = std::result::Result<T, E>;
