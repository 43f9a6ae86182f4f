use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report. Variants are grouped by the stage
/// that raises them; `module()` gives the stage name for CLI messages.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    // input / shape
    #[error("column {0} has zero variance")]
    ZeroVarianceColumn(usize),
    #[error("too few rows: need at least {needed}, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value in input: {0}")]
    NonFiniteInput(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    // knockoff construction
    #[error("matrix does not have unit diagonal (entry {index} = {value})")]
    NotUnitDiagonal { index: usize, value: f64 },
    #[error("matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("block solver diverged on block starting at variable {block_start}")]
    BlockSolveDiverged { block_start: usize },

    // regression
    #[error("coordinate descent did not converge within {sweeps} sweeps at lambda = {lambda:e}")]
    Diverged { sweeps: usize, lambda: f64 },
    #[error("design matrix is singular")]
    SingularDesign,
    #[error("observation {0} has leverage one")]
    LeverageOne(usize),

    // filter / selection
    #[error("feature statistics are empty")]
    EmptyStats,
    #[error("subsample of {n_sub} rows is too small (minimum 10)")]
    SubsampleTooSmall { n_sub: usize },
    #[error("component {0} is not mapped to any group")]
    UnmappedComponent(usize),

    // grouping / pca
    #[error("group {0} is empty")]
    EmptyGroup(usize),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    // evaluation
    #[error("empty training window for split {0}")]
    EmptyTrainWindow(String),
    #[error("empty test window for split {0}")]
    EmptyTestWindow(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    Empty,
    #[error("series too short: need at least {needed}, got {got}")]
    SeriesTooShort { needed: usize, got: usize },

    // diagnostics
    #[error("index {index} out of range for {len} columns")]
    IndexOutOfRange { index: usize, len: usize },

    // ingestion / config
    #[error("parse error at row {row}, column {col}: {message}")]
    ParseError { row: usize, col: String, message: String },
    #[error("missing column: {0}")]
    MissingColumn(String),
    #[error("invalid simulation design: {0}")]
    InvalidDesign(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Name of the stage that raises this error.
    pub fn module(&self) -> &'static str {
        use Error::*;
        match self {
            ZeroVarianceColumn(_)
            | TooFewRows { .. }
            | NotUnitDiagonal { .. }
            | NotPsd { .. }
            | BlockSolveDiverged { .. } => "gaussian_knockoffs",
            Diverged { .. } | SingularDesign | LeverageOne(_) | NonFiniteInput(_) => "sparse_regression",
            EmptyStats => "knockoff_filter",
            SubsampleTooSmall { .. } | UnmappedComponent(_) => "robust_selection",
            EmptyGroup(_) | SchemaMismatch(_) => "group_pca",
            EmptyTrainWindow(_) | EmptyTestWindow(_) | LengthMismatch { .. } | Empty | SeriesTooShort { .. } => {
                "evaluation"
            }
            IndexOutOfRange { .. } => "diagnostics",
            ParseError { .. } | MissingColumn(_) | InvalidDesign(_) | InvalidConfig(_) | Io(_) => "cli_harness",
            DimensionMismatch(_) | InvalidArgument(_) => "core",
        }
    }

    /// True for errors caught by up-front validation rather than during computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_)
                | Error::InvalidDesign(_)
                | Error::InvalidArgument(_)
                | Error::ParseError { .. }
                | Error::MissingColumn(_)
                | Error::SchemaMismatch(_)
                | Error::Io(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::InvalidConfig(e.to_string())
    }
}
