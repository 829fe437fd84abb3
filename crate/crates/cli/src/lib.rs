//! Library side of the `beamshare` binary: run configuration and the
//! subcommand implementations, exposed so integration tests drive the same
//! code paths as the CLI.

pub mod commands;
pub mod config;

pub use commands::{
    cmd_eval, cmd_fig5, cmd_fig6, cmd_gen_env, cmd_map, cmd_protocol_demo, cmd_train, DemoResult,
    Fig5Result, Fig6Record, Fig6Result, GenEnvResult,
};
pub use config::RunConfig;
