use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Where in a CSV source an ingestion problem was found.
/// Rows are 1-based data rows (the header is not counted).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Location {
    pub row: Option<usize>,
    pub column: Option<String>,
}

impl std::fmt::Display for Location {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (&self.row, &self.column) {
            (Some(r), Some(c)) => write!(f, "row {r}, column {c}"),
            (Some(r), None) => write!(f, "row {r}"),
            (None, Some(c)) => write!(f, "column {c}"),
            (None, None) => write!(f, "input"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing value at {0}")]
    MissingValue(Location),
    #[error("cannot parse `{value}` as a finite number at {at}")]
    BadNumber { value: String, at: Location },
    #[error("binary column value `{value}` is not 0 or 1 at {at}")]
    NotBinary { value: String, at: Location },
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("level `{value}` is not declared at {at}")]
    UndeclaredLevel { value: String, at: Location },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("attribute `{attribute}` is {actual}, predicate expects {expected}")]
    KindMismatch { attribute: String, expected: &'static str, actual: &'static str },
    #[error("invalid predicate: {0}")]
    InvalidPredicate(String),
    #[error("unsatisfiable criterion: empty intersection on `{0}`")]
    Unsatisfiable(String),
    #[error("cannot parse criterion: {0}")]
    CriterionSyntax(String),

    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("dataset too small: {rows} rows, need at least {needed}")]
    TooSmall { rows: usize, needed: usize },
    #[error("metric {0} requires truth labels")]
    TruthRequired(&'static str),
    #[error("p-value {0} outside [0, 1]")]
    PValueRange(f64),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-parsable code for CLI diagnostics.
    pub fn code(&self) -> &'static str {
        match self {
            Error::MissingValue(_) => "E_MISSING_VALUE",
            Error::BadNumber { .. } => "E_BAD_NUMBER",
            Error::NotBinary { .. } => "E_NOT_BINARY",
            Error::DuplicateColumn(_) => "E_DUPLICATE_COLUMN",
            Error::UndeclaredLevel { .. } => "E_UNDECLARED_LEVEL",
            Error::Schema(_) => "E_SCHEMA",
            Error::Csv(_) => "E_CSV",
            Error::Io(_) => "E_IO",
            Error::InvalidDataset(_) => "E_DATASET",
            Error::UnknownAttribute(_) => "E_UNKNOWN_ATTRIBUTE",
            Error::KindMismatch { .. } => "E_KIND_MISMATCH",
            Error::InvalidPredicate(_) => "E_PREDICATE",
            Error::Unsatisfiable(_) => "E_UNSATISFIABLE",
            Error::CriterionSyntax(_) => "E_CRITERION_SYNTAX",
            Error::Params(_) => "E_PARAMS",
            Error::TooSmall { .. } => "E_TOO_SMALL",
            Error::TruthRequired(_) => "E_TRUTH_REQUIRED",
            Error::PValueRange(_) => "E_PVALUE_RANGE",
            Error::Config(_) => "E_CONFIG",
            Error::Json(_) => "E_JSON",
        }
    }
}
