//! Error type shared by every module in the crate.

use std::fmt;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while validating inputs, building operators,
/// or running the preparation protocol.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Matrix is not square: `rows x cols` given.
    NotSquare { rows: usize, cols: usize },
    /// A transition-matrix entry is negative beyond rounding slack.
    NegativeEntry { row: usize, col: usize, value: f64 },
    /// A column of a transition matrix does not sum to 1.
    ColumnSumViolation { col: usize, sum: f64 },
    /// The chain is not ergodic (reducible or periodic), so it has no unique
    /// limiting distribution.
    NotErgodic,
    /// The chain fails detailed balance with respect to its stationary
    /// distribution by more than the stated tolerance.
    NotReversible { residual: f64 },
    /// A distribution entry that must be strictly positive is zero.
    ZeroStationaryProbability { index: usize },
    /// Two objects that must share a dimension do not.
    DimensionMismatch { expected: usize, got: usize },
    /// A quantity violated a bound that the theory guarantees; indicates a
    /// numerical breakdown rather than bad input.
    LemmaViolation { what: String },
    /// Input does not satisfy a documented precondition of the operation.
    PreconditionViolated { what: String },
    /// The state space is too small for the requested construction.
    TooFewStates { need: usize, got: usize },
    /// The requested ancilla resolution cannot reach the requested accuracy.
    ConfigTooCoarse { rounds: usize, achievable: f64, requested: f64 },
    /// A numeric argument is outside the mathematical domain of the operation.
    DomainError { what: String },
    /// A randomized routine exceeded its retry budget.
    ExhaustedRetries { attempts: usize, what: String },
    /// One protocol step failed irrecoverably; carries the step index.
    StepFailure { step: usize, what: String },
    /// An adaptive step size shrank below the representable resolution.
    StepSizeUnderflow,
    /// File or stream I/O failed; carries the rendered cause.
    Io { what: String },
    /// Input text could not be parsed; carries position information.
    Parse { what: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NotSquare { rows, cols } => {
                write!(f, "matrix is {rows}x{cols}, expected square")
            }
            Error::NegativeEntry { row, col, value } => {
                write!(f, "entry ({row},{col}) = {value} is negative")
            }
            Error::ColumnSumViolation { col, sum } => {
                write!(f, "column {col} sums to {sum}, expected 1")
            }
            Error::NotErgodic => write!(f, "chain is not ergodic"),
            Error::NotReversible { residual } => {
                write!(f, "detailed balance fails, residual {residual:.3e}")
            }
            Error::ZeroStationaryProbability { index } => {
                write!(f, "stationary probability of state {index} is zero")
            }
            Error::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Error::LemmaViolation { what } => write!(f, "guaranteed bound violated: {what}"),
            Error::PreconditionViolated { what } => write!(f, "precondition violated: {what}"),
            Error::TooFewStates { need, got } => {
                write!(f, "need at least {need} states, got {got}")
            }
            Error::ConfigTooCoarse { rounds, achievable, requested } => write!(
                f,
                "{rounds} detection rounds reach error {achievable:.3e}, \
                 requested {requested:.3e}"
            ),
            Error::DomainError { what } => write!(f, "domain error: {what}"),
            Error::ExhaustedRetries { attempts, what } => {
                write!(f, "gave up after {attempts} attempts: {what}")
            }
            Error::StepFailure { step, what } => write!(f, "step {step} failed: {what}"),
            Error::StepSizeUnderflow => write!(f, "adaptive step size underflowed"),
            Error::Io { what } => write!(f, "io error: {what}"),
            Error::Parse { what } => write!(f, "parse error: {what}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io { what: e.to_string() }
    }
}
