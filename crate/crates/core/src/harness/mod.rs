//! Experiment orchestration: configuration, data files, the coverage
//! pipeline, treatment-effect composition, and plot-data export.

pub mod config;
pub mod data_io;
pub mod export;
pub mod ite;
pub mod pipeline;
pub mod report;

pub use config::{
    DataSource, ExperimentConfig, ExportIntervals, InterventionSpec, Scenario, SolverParams,
};
pub use export::{export_plot_data, parse_intervals_csv};
pub use ite::ite_interval;
pub use pipeline::{
    build_test_set, compute_cell_intervals, prepare_seed, run_experiment, SeedArtifacts, TestPoint,
};
pub use report::{Aggregate, CellResult, CoverageReport, IntervalRecord};
