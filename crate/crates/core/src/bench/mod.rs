//! Experiment harness: specs, sweeps, Monte Carlo trials and CSV output.

pub mod oracle;
pub mod presets;
pub mod run;
pub mod spec;
pub mod table;
pub mod validate;

pub use oracle::{compare_with_grid, grid_search, oracle_scene, GridOptimum, OracleReport};
pub use presets::{preset, PRESET_NAMES};
pub use run::{plan, run_experiment, run_trial, RunOutcome, Scheme, SweepPoint};
pub use spec::{load_spec, ExperimentSpec, PointConfig, ReflectionMode, ScenarioSpec, SweepAxis, SweepSpec};
pub use table::{SummaryRow, TrialRow};
