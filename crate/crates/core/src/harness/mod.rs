//! Configuration, experiment runners and report emission behind `ddsde-lab`.

mod config;
mod experiments;
mod report;

pub use config::{
    BoundsSection, DensitySection, DriftConfig, ExperimentConfig, ExperimentKind, GridConfig, InitialConfig,
    KernelConfig, ModulusConfig, NoiseConfig, ProcessConfig, SolverSection, StabilitySection, SweepSection,
    TanakaSection, Tolerances,
};
pub use experiments::{
    run_bounds_table, run_density_propagation, run_experiment, run_mfl_sweep, run_stability, run_tanaka_check,
    BoundsTable, ConvergenceReport, ConvergenceRow, DensityReport, DensityRow, StabilityReport, StabilityRow,
    TanakaReport, TanakaRow,
};
pub use report::{config_hash, Check, ExperimentReport, CSV_SCHEMA_VERSION};
