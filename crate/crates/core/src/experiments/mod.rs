//! Experiment configs, the estimation pipeline and the reproduction runs.

pub mod config;
pub mod pipeline;
pub mod presets;
pub mod reproduce;

pub use config::{DensityKind, ExperimentConfig, GridConfig, McmcConfig, MeanConfig, OutputConfig, PriorConfig};
pub use pipeline::{
    estimate, read_data_csv, run_estimate, scan, scan_grid, simulate_data, write_data_csv, write_scan_csv, DensityGrid,
    Estimation, EstimationResult, Problem, ScanRow,
};
pub use presets::preset;
pub use reproduce::{monte_carlo, reproduce, MonteCarloSummary, Overrides, Report, EXPERIMENTS};
