use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}: {message}")]
    MalformedRow { row: usize, message: String },

    #[error("row {row}: duplicate record for patient {patient:?}, visit {visit:?}, document {doc:?}")]
    DuplicateRecord {
        row: usize,
        patient: String,
        visit: String,
        doc: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("backward pass requested for an encoding recorded without a tape")]
    MissingTape,

    #[error("non-finite loss {value} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { value: f64, epoch: usize, batch: usize },

    #[error("singular design matrix: column {column:?} is collinear with the preceding columns")]
    SingularDesign { column: String },

    #[error("corpus needs at least {needed} patients, found {found}")]
    TooFewPatients { needed: usize, found: usize },

    #[error("unsupported format version {found} in {what} (expected {expected})")]
    FormatVersion {
        what: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable snake_case name of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MalformedRow { .. } => "malformed_row",
            Error::DuplicateRecord { .. } => "duplicate_record",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::EmptyInput(_) => "empty_input",
            Error::MissingTape => "missing_tape",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::SingularDesign { .. } => "singular_design",
            Error::TooFewPatients { .. } => "too_few_patients",
            Error::FormatVersion { .. } => "format_version",
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => "missing_file",
            Error::Io { .. } => "io",
            Error::Json(_) => "schema_mismatch",
            Error::Csv(_) => "csv",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
