//! Command-line harness for the inspection planner: data collection, single
//! missions, the back-face elimination study, solver cross-checks and model
//! export. Each command is a plain function of an [`ExperimentConfig`], so
//! tests drive them without spawning the binary.

pub mod collect;
pub mod config;
pub mod oracle;
pub mod run;
pub mod study;

pub use collect::{cmd_collect, Plant};
pub use config::ExperimentConfig;
pub use oracle::{cmd_export_mps, cmd_oracle_check};
pub use run::cmd_run;
pub use study::cmd_eval_bfe;
