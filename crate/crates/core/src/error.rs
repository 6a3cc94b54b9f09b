use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum DlError {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },

    #[error("dictionary is rank deficient (sigma_min / sigma_max = {ratio:e})")]
    Rank { ratio: f64 },

    #[error("column {column} has zero norm and cannot be normalized")]
    Normalization { column: usize },

    #[error("unsupported coefficient model for {operation}: {model}")]
    UnsupportedModel { operation: &'static str, model: String },

    #[error("enumeration of {count} subsets exceeds the limit of {limit}")]
    Capacity { count: u128, limit: u128 },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("block coordinate descent aborted at sweep {sweep}, coordinate {coordinate}: {source}")]
    BcdAborted {
        sweep: usize,
        coordinate: usize,
        #[source]
        source: Box<DlError>,
        /// Objective values of the sweeps completed before the failure.
        objective_per_sweep: Vec<f64>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = DlError> = std::result::Result<T, E>;

pub(crate) fn shape_err(expected: impl Into<String>, found: impl Into<String>) -> DlError {
    DlError::Shape {
        expected: expected.into(),
        found: found.into(),
    }
}
