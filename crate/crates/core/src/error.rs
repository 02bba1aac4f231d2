use std::path::PathBuf;

/// Broad failure classes, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Training,
    Other,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("duplicate tract_id \"{0}\"")]
    DuplicateTract(String),
    #[error("malformed coordinates in feature {row}: {reason}")]
    MalformedCoordinates { row: usize, reason: String },
    #[error("missing column \"{0}\"")]
    MissingColumn(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },
    #[error("training failed: {0}")]
    Training(String),
    #[error("model state is untrained")]
    Untrained,
    #[error("stage {stage} failed after completing [{}]: {source}", completed.join(", "))]
    Stage {
        stage: String,
        completed: Vec<String>,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::InvalidParameter(_) => ErrorKind::Config,
            Error::Io { .. }
            | Error::Csv(_)
            | Error::Json(_)
            | Error::Data(_)
            | Error::DuplicateTract(_)
            | Error::MalformedCoordinates { .. }
            | Error::MissingColumn(_) => ErrorKind::Data,
            Error::Diverged { .. } | Error::NonFinite(_) | Error::Training(_) | Error::Untrained => ErrorKind::Training,
            Error::Shape(_) => ErrorKind::Other,
            Error::Stage { source, .. } => source.kind(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
