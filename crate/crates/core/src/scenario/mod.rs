//! Scenario configuration, the built-in catalog and the runner behind the
//! `degsde` command-line tool.

pub mod catalog;
pub mod config;
pub mod runner;

pub use catalog::{catalog_csv, catalog_lines, Anchor, Scenario, CATALOG_CSV_HEADER};
pub use config::{Experiment, Format, OutputConfig, ScenarioConfig};
pub use runner::{execute, run, Artifact, Check, RunOutput, SUMMARY_FILE};
