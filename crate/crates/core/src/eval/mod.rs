//! Metrics, experiment grids and report files.
//!
//! Errors are measured on predicted frames only, after normalizing with the
//! dataset's training statistics. Sent frames are exact up to wire precision
//! and would only dilute the comparison.

mod experiment;
mod metrics;
pub mod report;

pub use experiment::{
    evaluate_cell, run_cell, run_experiment, CellOutcome, EvalDataset, EvalMode, ExperimentGrid, MetricResult, RunKey,
    TracePoint,
};
pub use metrics::{
    diag_gaussian, fkd_features, frame_mse, frechet_from_features, frechet_keypoint_distance,
    keypoint_mse, median, FkdFeature, FKD_FEATURES,
};
pub use report::{emit_report, load_report_dir, parse_report, run_stem, Report, ResultRow};
