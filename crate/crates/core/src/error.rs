use std::path::PathBuf;

/// Errors surfaced by panel ingestion, the solvers, and the estimators.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    /// A single offending cell. `row` is the 1-based line number in the file.
    #[error("row {row}, column `{column}`: {message}")]
    Cell {
        row: u64,
        column: String,
        message: String,
    },

    #[error("no unit column labelled `{0}`")]
    UnknownUnit(String),

    #[error("no period row labelled `{0}`")]
    UnknownPeriod(String),

    #[error("duplicate {kind} label `{label}`")]
    DuplicateLabel { kind: &'static str, label: String },

    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported restrictions: {0}")]
    UnsupportedRestrictions(String),

    #[error("C({n}, {k}) = {count} subsets exceeds the enumeration limit of {limit}")]
    TooManySubsets {
        n: usize,
        k: usize,
        count: u128,
        limit: u128,
    },

    #[error("dataset `{name}` is not available: {hint}")]
    MissingDataset { name: String, hint: String },

    #[error("every placebo fit failed; first failure: {0}")]
    AllPlacebosFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
