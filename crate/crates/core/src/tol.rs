//! Numerical tolerances used across the crate.
//!
//! Everything here is an absolute tolerance unless the name says otherwise.
//! They are collected in one place so tests and library code agree on what
//! "equal" means for floating point data.

/// Column sums of a stochastic matrix may deviate from 1 by this much.
pub const COLUMN_SUM: f64 = 1e-12;

/// Entries of a stochastic matrix may be negative by this much (rounding slack).
pub const ENTRY_NEGATIVITY: f64 = 1e-12;

/// Detailed-balance residual allowed when classifying a chain as reversible.
pub const REVERSIBILITY: f64 = 1e-10;

/// Convergence threshold for stationary-distribution power iteration.
pub const STATIONARY: f64 = 1e-12;

/// A stationary probability below this is treated as a zero entry.
pub const STATIONARY_POSITIVITY: f64 = 1e-13;

/// Norm tolerance for states and operator columns that should be unit length.
pub const UNIT_NORM: f64 = 1e-10;

/// Tolerance for unitarity / orthogonality checks on dense operators.
pub const UNITARITY: f64 = 1e-10;

/// Rank cut used when orthonormalizing the busy-subspace spanning set.
pub const BUSY_RANK: f64 = 1e-10;

/// Residual bound for eigenpairs of the reduced walk operator.
pub const EIGENPAIR_RESIDUAL: f64 = 1e-9;

/// Eigenphases closer to zero than this are snapped to exactly zero.
pub const PHASE_SNAP: f64 = 1e-9;

/// General-purpose comparison slack for probabilities and amplitudes in tests.
pub const PROBABILITY: f64 = 1e-9;

/// Slack added to analytic bounds before asserting them, so that a bound that
/// is exactly attained does not fail on rounding.
pub const BOUND_GRACE: f64 = 1e-10;
