//! Reconstruction-error analysis, depth sweeps, ablation runs and prediction-grid export.

mod ablation;
mod export;
mod recon;
mod scaling;

pub use ablation::{
    run_ablations, write_ablation_csv, Ablation, AblationConfig, AblationRow, AblationTasks, TaskScore,
};
pub use export::{export_prediction_grid, PredictionGrid, PredictionRegion};
pub use recon::{
    quantile, reconstruction_error, CellErrors, CheckpointReconstructor, ErrorConfig, ErrorReport, ErrorSummary,
    GroundTruth, Reconstructor, DEFAULT_CELLS, LOG_EPS, QUANTILES,
};
pub use scaling::{
    median, median_losses, scaling_sweep, write_scaling_csv, ScalingConfig, ScalingResult, SweepProbe, DEFAULT_DEPTHS,
};
