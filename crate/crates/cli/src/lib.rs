//! Configuration, subcommands and output writers behind the `epicontrol` binary.

use std::path::PathBuf;

use epicontrol_core::Error;

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{run, Outcome};
pub use config::{Mode, Overrides, RunConfig};

pub const EXIT_OK: i32 = 0;
/// The run completed but some window had no feasible plan.
pub const EXIT_INFEASIBLE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot parse config {}: {message}", path.display())]
    ConfigParse { path: PathBuf, message: String },

    #[error("invalid config:\n  - {}", .0.join("\n  - "))]
    ConfigValidation(Vec<String>),

    #[error("cannot read {}: {source}", path.display())]
    Input {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {}: {source}", path.display())]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] Error),

    #[error("cannot serialize output: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigParse { .. } | CliError::ConfigValidation(_) | CliError::Input { .. } => EXIT_INPUT,
            CliError::Output { .. } | CliError::Json(_) => EXIT_INTERNAL,
            CliError::Core(e) => match e.root() {
                Error::InvalidPopulation(_)
                | Error::InvalidParams(_)
                | Error::DateOutOfSchedule { .. }
                | Error::InvalidSchedule(_)
                | Error::MalformedCsv(_)
                | Error::RegionNotFound(_)
                | Error::GapInDates { .. }
                | Error::InsufficientObservations { .. }
                | Error::RankDeficient { .. }
                | Error::InvalidMpcConfig(_)
                | Error::Io(_) => EXIT_INPUT,
                _ => EXIT_INTERNAL,
            },
        }
    }
}
