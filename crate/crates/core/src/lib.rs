//! A knowledge base that holds security findings as revisable beliefs.
//!
//! Tool reports and human assessments enter as explicit beliefs. Stratified
//! rules derive duplicates, issues, validation statuses and priorities, each
//! with a recorded justification. When an input is withdrawn or contradicted,
//! everything that rested on it is retracted and re-derived, and every step is
//! kept in an append-only event log.
//!
//! ```
//! use secbelief::ingest::RawReport;
//! use secbelief::rules::{in_memory_kb, RulesConfig};
//! use secbelief::views::IssueFilter;
//!
//! let mut kb = in_memory_kb(&RulesConfig::default()).unwrap();
//! let report = br#"{"tool":"zap","category":"DAST","findings":[
//!     {"title":"Reflected XSS","severity":"high","endpoint":"/search"}]}"#;
//! kb.ingest(&RawReport::new(report.to_vec(), "run-1", 1_000)).unwrap();
//!
//! let issues = kb.issues(&IssueFilter::default());
//! assert_eq!(issues.len(), 1);
//! assert_eq!(issues[0].rank, Some(1));
//! ```

pub mod engine;
pub mod error;
pub mod ingest;
pub mod kb;
pub mod model;
pub mod rules;
#[cfg(feature = "server")]
pub mod service;
pub mod statement;
pub mod store;
pub mod tms;
pub mod views;

pub use engine::{Delta, EngineStatus, Rule, RuleCatalog};
pub use error::{IngestError, KbError, Result};
pub use kb::{AssessmentOutcome, AssessmentRequest, IngestResult, KnowledgeBase, SubjectRef};
pub use statement::{BeliefId, Statement, StatementKind};
