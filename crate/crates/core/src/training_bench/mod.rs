//! Cross-validated training and evaluation on the synthetic benchmarks, and
//! the consolidated property checks.

mod cv;
mod features;
mod train;
mod verify;

pub use cv::{
    default_test_rotation, mean_std, model_config, record_target, rotated_samples, run_cv,
    run_cv_prepared,
    samples_for, target_kind, target_moments, CvConfig, CvRun, CvSummary, FoldSummary, ModelShape,
};
pub use features::{
    build_operators, graph_features, graph_features_with, precompute_features, scalar_inputs, select_banks,
    vector_input, Banks, GraphOperators, PipelineConfig, ScaleSelection,
};
pub use train::{evaluate_mse, train_fold, CvPlan, CvSplit, FoldOutcome, MetricsRow, Sample, Schedule};
pub use verify::{
    ellipsoid_population, frame_bound_check, gradient_check, kronecker_reduction_error,
    model_rotation_error, operator_power_equivariance, q_power_block_error, relative_error,
    scattering_equivariance, telescoping_check, telescoping_error, verify_suite, CheckResult,
    EquivarianceMeasurement, Expect, FrameBoundMeasurement, TestGraph, VerifyReport,
};
