use thiserror::Error;

/// Errors raised by the core algorithms.
///
/// Variants fall into two families: input validation (bad shapes, violated
/// preconditions) and numerical failure (small divisors, non-convergence).
/// [`Error::is_numerical`] tells them apart, which is what the CLI exit codes use.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("symbol caps differ: {0:?} vs {1:?}")]
    CapMismatch(crate::symbol::Caps, crate::symbol::Caps),

    #[error("key {0:?} lies outside caps {1:?}")]
    KeyOutsideCaps(crate::symbol::Monomial, crate::symbol::Caps),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("small divisor at mode k = {k:?}: |a.k| = {divisor:e} below floor {floor:e}")]
    SmallDivisor { k: [i32; 2], divisor: f64, floor: f64 },

    #[error("series did not terminate after {0} terms")]
    SeriesDivergence(usize),

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("eigensolver failure: {0}")]
    Eigensolver(String),
}

impl Error {
    /// True for failures of the numerics rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SmallDivisor { .. }
                | Error::SeriesDivergence(_)
                | Error::NoConvergence(_)
                | Error::Eigensolver(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
