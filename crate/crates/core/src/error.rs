use std::fmt;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors emitted anywhere in the library.
#[derive(Debug)]
pub enum Error {
    /// Shapes fed to an operation do not line up.
    Dim { op: &'static str, detail: String },
    /// A configuration value is out of range or inconsistent.
    Config(String),
    /// An API contract was violated (frozen set mutated, non-scalar loss, ...).
    Contract(String),
    /// A data file does not match the expected column schema.
    Schema(String),
    /// Row-level ingestion failure (timestamp gap, non-finite value, ...).
    Ingest(String),
    /// The requested feature is disabled in this model configuration.
    Capability(String),
    /// Training aborted (diverged or failed) at the given epoch.
    Training { epoch: usize, message: String },
    Io(std::io::Error),
    Csv(csv::Error),
    Json(serde_json::Error),
}

impl Error {
    pub fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dim { op, detail: detail.into() }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dim { op, detail } => write!(f, "dimension error in {op}: {detail}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Contract(msg) => write!(f, "contract error: {msg}"),
            Error::Schema(msg) => write!(f, "schema error: {msg}"),
            Error::Ingest(msg) => write!(f, "ingestion error: {msg}"),
            Error::Capability(msg) => write!(f, "capability error: {msg}"),
            Error::Training { epoch, message } => {
                write!(f, "training error at epoch {epoch}: {message}")
            }
            Error::Io(e) => write!(f, "io error: {e}"),
            Error::Csv(e) => write!(f, "csv error: {e}"),
            Error::Json(e) => write!(f, "json error: {e}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e)
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e)
    }
}
