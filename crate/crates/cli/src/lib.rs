//! Batch front end: analysis reports, synthetic cohorts and utility grids.

pub mod analyze;
pub mod grid;
pub mod simulate;
pub mod stats;

pub use analyze::{analyze_dataset, analyze_files, expand_inputs, AnalysisOptions, AnalysisReport, Check};
pub use grid::{afriat_report, AfriatReport};
pub use simulate::{simulate_cohort, write_cohort, CohortSpec, Manifest};
