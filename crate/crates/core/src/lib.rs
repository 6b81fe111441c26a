//! Locate population subgroups that receive disparate outcomes from a
//! machine-learning system.
//!
//! Candidate subgroups come from a forest of randomized conditional
//! inference trees grown on one half of the data; each candidate is then
//! tested on the other half with χ² tests and Benjamini–Hochberg
//! correction, and the significant ones are ranked into an audit report.

pub mod audit;
pub mod criterion;
pub mod data;
pub mod disparity;
pub mod error;
pub mod forest;
pub mod ingest;
pub mod report;
pub mod splitting;
pub mod stats;
pub mod synthetic;

pub use criterion::{Condition, Criterion, Predicate};
pub use data::{AttributeKind, AttributeSchema, AuditDataset, Column, DataSource, FairnessMetric, OutcomeKind};
pub use error::{Error, Result};
