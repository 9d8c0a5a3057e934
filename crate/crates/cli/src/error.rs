use std::fmt;

use rdo_core::RdoError;
use thiserror::Error;

/// Where in an instance file a parse error was found.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Location {
    At { line: usize, column: usize },
    Key(String),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::At { line, column } => write!(f, "line {line}, column {column}"),
            Location::Key(k) => write!(f, "key \"{k}\""),
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}: {location}: {message}")]
    Parse { origin: String, location: Location, message: String },
    #[error("plot data needs a 2-dimensional instance, got n = {n}")]
    DimensionNotPlottable { n: usize },
    #[error(transparent)]
    Core(#[from] RdoError),
}

pub type CliResult<T> = std::result::Result<T, CliError>;
