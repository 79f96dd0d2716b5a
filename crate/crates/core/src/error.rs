use thiserror::Error;

/// Errors raised by the model, target and solver layers.
#[derive(Debug, Error)]
pub enum Error {
    /// Topology, shape or cardinality inconsistency.
    #[error("structural error: {0}")]
    Structural(String),

    /// A parameter vector leaves its simplex constraints.
    #[error("infeasible parameter block {block}: {detail}")]
    Feasibility { block: String, detail: String },

    /// A family parameter produced a table with negative entries.
    #[error("invalid family point {family}: most negative entry {min_entry:e} at index {index}")]
    InvalidFamilyPoint {
        family: String,
        min_entry: f64,
        index: usize,
    },

    /// Family parameter outside its domain.
    #[error("parameter out of domain: {0}")]
    Domain(String),

    /// A malformed or non-normalized data file.
    #[error("invalid input data: {0}")]
    InputData(String),

    /// No polynomial root matches the requested selection rule.
    #[error("root selection failed: {0}")]
    Selection(String),

    /// The success predicate is not bracketed by the search interval.
    #[error("bracket error: {0}")]
    Bracket(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
