//! Statistical verification: experiment harness and statistics utilities.

pub mod experiments;
pub mod stats;

pub use experiments::{end_to_end, exit_law_uniformity, lemma_suite, trace_consistency, within_cell_uniformity, ComparisonReport, ExperimentSpec, LemmaSuiteParams, LemmaSuiteReport, SimOverrides, TraceReport, VerifyError};
pub use stats::{chi_square, ks_statistic, loglog_slope, ols, tv_distance, wilson_interval};
