//! Style auditor for spreadsheet models.
//!
//! Load a workbook with [`io::load`], run [`analyze`] and render the
//! [`report::ReportDocument`] as text, JSON or DOT.

pub mod analyze;
pub mod config;
pub mod formula;
pub mod graph;
pub mod io;
pub mod layout;
pub mod model;
pub mod report;
pub mod rules;
pub mod simplify;

pub use analyze::{analyze, nest_all, Analysis, NestingOutcome};
pub use config::AuditConfig;
pub use model::Workbook;
