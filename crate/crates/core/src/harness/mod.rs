//! Evaluation and experiment plumbing: coverage of the ball's space,
//! experiment matrices with per-trial logs, summaries and SVG plots.

pub mod experiment;
pub mod metrics;
pub mod plot;

pub use experiment::{
    ratio_csv, reports_from_logs, run_experiment, summary_csv, ExperimentConfig, ExperimentReport, TrialReport,
};
pub use metrics::{exploration_ratio, grasp_count, median, CoverageGrid};
pub use plot::emit_plots;
