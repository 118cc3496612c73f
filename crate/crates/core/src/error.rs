use thiserror::Error;

use crate::dataset::Violation;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the analysis engine.
///
/// Variants fall into two families: input problems (bad files, data that
/// does not satisfy a method's requirements, mismatched axes) and numerical
/// failures (non-convergence, rank deficiency). [`Error::is_numerical`]
/// separates them for callers that map errors onto exit codes or HTTP
/// statuses.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Import(#[from] ImportError),

    #[error("{}", join_violations(.0))]
    Validation(Vec<Violation>),

    #[error("{0}")]
    Dimension(String),

    #[error("{0}")]
    InvalidInput(String),

    #[error("all variables have zero variance; nothing left to standardise")]
    AllZeroVariance,

    #[error("cross-validation fold {fold} failed: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("NIPALS did not converge for component {component} after {iterations} iterations")]
    Convergence { component: usize, iterations: usize },

    #[error("REML optimizer did not converge: {0}")]
    Optimizer(String),

    #[error("design matrix is rank deficient; aliased columns: {}", .0.join(", "))]
    RankDeficient(Vec<String>),

    #[error("singular contrast covariance for term '{0}'")]
    SingularContrast(String),

    #[error("no such series '{0}'")]
    NoSuchSeries(String),

    #[error("term '{0}' is not part of the fixed effects")]
    NoSuchTerm(String),

    #[error("refit without random term '{term}' failed: {source}")]
    Refit {
        term: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for failures of the numerical machinery rather than of the input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Convergence { .. }
            | Error::Optimizer(_)
            | Error::RankDeficient(_)
            | Error::SingularContrast(_) => true,
            Error::Fold { source, .. } | Error::Refit { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// Failures while turning raw bytes into a [`crate::dataset::Dataset`].
///
/// Row and column numbers refer to the raw file and are 1-based.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ImportError {
    #[error("input is not valid {encoding} (byte offset {offset})")]
    Decode { encoding: &'static str, offset: usize },

    #[error("unparseable cell r{row}c{col} '{text}'")]
    Unparseable { row: usize, col: usize, text: String },

    #[error("ragged row {row}: expected {expected} fields, found {found}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("metadata group '{group}' has a missing cell at position {index}")]
    MissingMetadata { group: String, index: usize },

    #[error("no data cells found")]
    Empty,

    #[error("invalid import options: {0}")]
    Options(String),

    #[error("workbook error: {0}")]
    Workbook(String),

    #[error("invalid dataset document: {0}")]
    Document(String),
}
