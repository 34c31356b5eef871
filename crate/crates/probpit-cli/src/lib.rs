//! Experiment orchestration for the separation study: corpus synthesis,
//! training, evaluation, the multi-seed gamma sweep, and the cost-gap
//! study, all driven by one TOML configuration.

pub mod commands;
pub mod config;
pub mod corpus;
pub mod report;

pub use commands::{cmd_costgap, cmd_eval, cmd_sweep, cmd_synth, cmd_train};
pub use config::ExperimentConfig;
