//! Configuration-driven runs at desk scale.

pub mod config;
pub mod manifest;
pub mod presets;
pub mod run;

pub use config::{default_omega_grid, Engine, ExperimentConfig, LateMode, ResolvedCloud};
pub use manifest::{Manifest, VERSION};
pub use presets::{Preset, PresetName, PRESETS};
pub use run::{
    build_realization, late_value, omega_grid, realization_seed, run_field_sweep, run_relaxation,
    worker_pool, workers_from_env, write_trace_csv, Failure, Realization, RealizationInfo,
    RelaxationResult, SweepResult, SweepRow, Trace, WORKERS_ENV,
};
