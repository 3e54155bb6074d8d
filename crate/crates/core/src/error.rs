use thiserror::Error;

use crate::expr::ExprError;
use crate::interval::IntervalError;
use crate::reach::ReachTube;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Interval(#[from] IntervalError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("jacobian entry ({row}, {col}) is unbounded on both sides")]
    UnboundedBothSides { row: usize, col: usize },
    #[error("row {row} has {count} supporting-vector candidates, above the cap of {cap}")]
    CandidateExplosion { row: usize, count: u128, cap: usize },
    #[error("continuous-time evaluation needs a diagonal value")]
    MissingDiagonalValue,
    #[error("jacobian is not sign-stable at entries {entries:?}")]
    NotSignStable { entries: Vec<(usize, usize)> },
    #[error("jacobian entry ({row}, {col}) is infinite; the centered forms need finite bounds")]
    InfiniteJacobianEntry { row: usize, col: usize },
    #[error("empty intersection of enclosures (an input is unsound)")]
    EmptyIntersection,
    #[error("subdivision needs {cells} cells, above the budget of {cap}")]
    CellBudgetExceeded { cells: u128, cap: usize },
    #[error("inverted bounds in dimension {dim}: lower {lo} > upper {hi}")]
    InvertedBounds { dim: usize, lo: f64, hi: f64 },
    #[error("non-finite state encountered during integration")]
    NonFiniteState,
    #[error("constraint is inconsistent with the prior box (empty solution)")]
    EmptySolution,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{0}")]
    Validation(String),
    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("reach computation failed at step {step}: {source}")]
    Reach {
        step: usize,
        partial: Box<ReachTube>,
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors that mean "this method does not apply here" rather than a failure.
    pub fn is_inapplicable(&self) -> bool {
        matches!(
            self,
            Error::NotSignStable { .. }
                | Error::InfiniteJacobianEntry { .. }
                | Error::CandidateExplosion { .. }
                | Error::UnboundedBothSides { .. }
        )
    }

    /// True when a computation left the finite floating-point range.
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteState | Error::Expr(ExprError::Overflow(_))
        )
    }

    /// True for user-input problems (as opposed to computation failures).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_)
                | Error::Parse { .. }
                | Error::InvalidArgument(_)
                | Error::DimensionMismatch { .. }
                | Error::Expr(ExprError::Syntax { .. })
                | Error::Expr(ExprError::UnknownIdentifier { .. })
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
