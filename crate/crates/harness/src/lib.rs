//! Experiment orchestration for `gkf-core`: JSON configs, deterministic
//! runs on a harness-owned thread pool, and CSV/JSON reports.

pub mod config;
pub mod error;
pub mod report;
pub mod run;

pub use config::{DistanceMethod, Experiment, ExperimentConfig, FieldExperiment};
pub use error::HarnessError;
pub use report::{read_result, report, write_result, Report};
pub use run::{run, Counters, Estimate, RunResult};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "GKF_OUT_DIR";
