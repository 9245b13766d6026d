//! Scenario orchestration: configuration ingestion, the explicit
//! coupling loop, and the CSV/VTK/checkpoint outputs.

pub mod config;
pub mod output;
pub mod run;

pub use config::{
    load_config, AlphaUnit, ConfigError, OutputPlan, Parameters, Scenario, ScenarioConfig,
    SolverSettings,
};
pub use output::{
    load_checkpoint, parse_csv, write_checkpoint, write_vtk, OutputError, Record, StepDiagnostics,
    TimeSeries, CSV_HEADER,
};
pub use run::{
    build_domain, carbon_recurrence, carbon_recurrence_end, hgc_alpha_per_day, run, run_on_mesh,
    FieldState, RunError, RunOutput,
};
