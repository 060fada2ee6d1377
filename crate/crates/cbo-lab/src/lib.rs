//! Experiment harness for the rescaled consensus-based optimization
//! dynamics: optimization runs with the rescaled-mean output, coupled
//! mean-field error curves, uniform-in-time moment tracking, the
//! consensus-estimator MSE curve, and parameter diagnostics, plus the
//! config/report plumbing behind the `cbo-lab` CLI.
//!
//! Everything is reproducible from a master seed: worker threads only
//! ever split whole seeds or trials, and results are combined in a fixed
//! order, so the emitted reports are byte-identical across worker counts.

pub mod config;
pub mod experiments;
pub mod report;

pub use config::LabConfig;
pub use experiments::{
    coupled_mse, fit_loglog_slope, meanfield_error_curve, moment_trajectory,
    moment_trajectory_averaged, ratio_estimator_experiment, run_optimization,
    run_optimization_seeds, validate_params, MeanFieldCurve, MeanFieldEntry, MomentSeries,
    OptimizationResult, ParamDiagnostics, RatioEntry, RatioMseCurve, ValidationLevel,
};
