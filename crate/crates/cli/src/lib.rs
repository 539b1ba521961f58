//! Library side of the `toolflow` command: config loading, workflow runs,
//! timeline plots and the bundled scenarios.

pub mod config;
pub mod plot;
pub mod run;
pub mod scenarios;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("workflow failed: {0}")]
    Run(String),
    #[error("malformed timeline CSV at line {line}: {message}")]
    MalformedCsv { line: usize, message: String },
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
}
