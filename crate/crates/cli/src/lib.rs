//! Command-line front end for `ijforest`: configuration, model files and
//! report emission.

pub mod commands;
pub mod config;

pub use commands::{
    cmd_gen, cmd_oracle_check, cmd_predict, cmd_simulate, cmd_train, exit_code, resolve_threads, AssertionFailure,
    SimulateKind, SimulateOutput,
};
pub use config::RunConfig;
