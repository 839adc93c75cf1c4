//! Configuration, subcommands and artifact files.
//!
//! Every run is a pure function of its config (including the seed): two
//! runs with the same config write byte-identical files.

mod commands;
pub mod config;
pub mod profiles;

pub use commands::{
    grad_check, projection_threshold, run_command, run_grad_check, run_optimize, run_simulate,
    Command, GradCheck, RunError, DUALITY_TOL, FD_CHECK_EPSILON, FD_TOL, REMAINDER_RATIO,
};
pub use config::{
    load_config, parse_config, BoundSpec, ConfigError, Profile, RunConfig, TargetMode,
};
pub use profiles::{build, Setup, SetupError};
