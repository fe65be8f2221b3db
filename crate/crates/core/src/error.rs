//! One error type for the whole crate. Variants are grouped by how the CLI
//! classifies them: input validation, resource limits, or contract violations.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    // -- input validation -------------------------------------------------
    #[error("subset must be nonempty")]
    EmptySubset,
    #[error("subset mask {subset:#x} names terminals outside 1..={m}")]
    SubsetOutOfRange { subset: u32, m: usize },
    #[error("subsets {0:#x} and {1:#x} overlap")]
    OverlappingSubsets(u32, u32),
    #[error("need at least 2 terminals, got {0}")]
    TooFewTerminals(usize),
    #[error("terminal count {m} outside supported range 2..={max}")]
    TerminalRange { m: usize, max: usize },
    #[error("alphabet sizes must be positive")]
    EmptyAlphabet,
    #[error("probability table needs {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("probabilities sum to {sum}, expected 1 within {tol}")]
    NotNormalized { sum: f64, tol: f64 },
    #[error("negative or non-finite mass {mass} at '{id}'")]
    InvalidMass { id: String, mass: f64 },
    #[error("{what} must lie in ({lo}, {hi}), got {got}")]
    ParamRange {
        what: &'static str,
        lo: f64,
        hi: f64,
        got: f64,
    },
    #[error("Renyi order 1 is excluded (take a limit along a grid instead)")]
    AlphaOne,
    #[error("Renyi order must be nonnegative, got {0}")]
    NegativeAlpha(f64),
    #[error("measure has zero total mass")]
    ZeroMass,
    #[error("divergence undefined: atom '{0}' has mass {1} but zero reference mass")]
    AbsoluteContinuityViolation(String, f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix not symmetric: entries ({i},{j}) and ({j},{i}) differ by {dev}")]
    NotSymmetric { i: usize, j: usize, dev: f64 },
    #[error("matrix not positive definite: Cholesky pivot {pivot} in row {row}")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("no fractional partition exists for this target set (empty constraint)")]
    Infeasible,
    #[error("dual partition undefined: lambda_sum = {0} is not above 1")]
    DegenerateDual(f64),
    #[error("guarantee regime violated: 1 - delta - sqrt(delta + eps) = {0} is not positive")]
    VacuousRegime(f64),
    #[error("value not in the strategy's domain for this communication value")]
    UnknownValue,
    #[error("unknown suite {0:?}; expected lemma2, lemma3, theorem1-equiv, theorem3, secrecy, or all")]
    UnknownSuite(String),

    // -- resource limits ---------------------------------------------------
    #[error("joint table with {atoms} atoms exceeds the {limit}-atom limit")]
    SizeLimit { atoms: u128, limit: u64 },
    #[error("decode search over {needed} candidates exceeds the {limit} budget; reduce n")]
    SearchBudget { needed: u128, limit: u64 },

    // -- contract violations ----------------------------------------------
    #[error("tables are not eps-CR: recovery probability {got} is below {need}")]
    CrContract { got: f64, need: f64 },
    #[error("no successful trials to take a quantile over")]
    InsufficientSuccess,
    #[error("optimality certificate failed: duality gap {gap}")]
    Certification { gap: f64 },
    #[error("internal: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Coarse class used by the CLI to pick an exit status.
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            SizeLimit { .. } | SearchBudget { .. } => ErrorClass::Resource,
            CrContract { .. } | InsufficientSuccess | Certification { .. } | Internal(_) => {
                ErrorClass::Contract
            }
            _ => ErrorClass::Validation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Resource,
    Contract,
}
