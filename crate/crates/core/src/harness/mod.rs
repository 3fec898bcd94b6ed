//! Benchmark orchestration: manifests, run files, record persistence, runs
//! and report bundles.

pub mod config;
pub mod demo;
pub mod manifest;
pub mod records;
pub mod report;
pub mod run;

pub use report::{report, ReportBundle, ReportError, ReportOptions};
pub use run::{attribute_carbon, run_all, run_config, RunError, RunSummary};
