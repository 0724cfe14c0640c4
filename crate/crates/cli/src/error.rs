use std::path::{Path, PathBuf};

use sentinet::community::CommunityError;
use sentinet::corpus::CorpusError;
use sentinet::events::EventsError;
use sentinet::marketstudy::MarketError;
use sentinet::network::NetworkError;
use sentinet::sentiment::SentimentError;
use thiserror::Error;

/// Failure classes; each maps to one process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("missing input: {}", .0.display())]
    MissingInput(PathBuf),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Computation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingInput(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Computation(_) => 4,
        }
    }

    pub fn from_io(path: &Path, e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::MissingInput(path.to_path_buf())
        } else {
            CliError::Validation(format!("{}: {e}", path.display()))
        }
    }

    pub fn write(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Computation(format!("cannot write {}: {e}", path.display()))
    }

    pub fn corpus(path: &Path, e: CorpusError) -> Self {
        match e {
            CorpusError::Io(io) => Self::from_io(path, io),
            other => CliError::Validation(format!("{}: {other}", path.display())),
        }
    }

    pub fn market(path: &Path, e: MarketError) -> Self {
        match e {
            MarketError::Io(io) => Self::from_io(path, io),
            e @ (MarketError::InsufficientPairs { .. } | MarketError::ZeroVariance) => CliError::Computation(e.to_string()),
            other => CliError::Validation(format!("{}: {other}", path.display())),
        }
    }

    pub fn sentiment(path: &Path, e: SentimentError) -> Self {
        match e {
            SentimentError::Io(io) => Self::from_io(path, io),
            other => CliError::Validation(format!("{}: {other}", path.display())),
        }
    }

    pub fn network(context: &str, e: NetworkError) -> Self {
        match e {
            e @ (NetworkError::Format { .. } | NetworkError::UnknownNode(..) | NetworkError::MissingSector(..)) => {
                CliError::Validation(format!("{context}: {e}"))
            }
            other => CliError::Computation(format!("{context}: {other}")),
        }
    }

    pub fn community(context: &str, e: CommunityError) -> Self {
        match e {
            e @ CommunityError::ZeroWeight => CliError::Computation(format!("{context}: {e}")),
            other => CliError::Validation(format!("{context}: {other}")),
        }
    }

    pub fn events(context: &str, e: EventsError) -> Self {
        match e {
            e @ (EventsError::Format { .. } | EventsError::Misaligned { .. } | EventsError::UnknownTicker(..)) => {
                CliError::Validation(format!("{context}: {e}"))
            }
            other => CliError::Computation(format!("{context}: {other}")),
        }
    }
}
