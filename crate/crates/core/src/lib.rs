//! Simulator for preparing stationary distributions of slowly evolving
//! Markov chains with quantum-walk phase estimation and amplitude
//! amplification, tracked at the level of exact state vectors and honest
//! oracle-call accounting.

pub mod amplify;
pub mod chain_gen;
pub mod error;
pub mod ledger;
pub mod linalg;
pub mod markov;
pub mod phase;
pub mod protocol;
pub mod rng;
pub mod sim;
pub mod walk;
pub mod tol;

pub use amplify::{AmplificationReport, MarkedSet};
pub use chain_gen::{ChainSequence, SequenceFamily, SequenceSpec, SequenceStep};
pub use error::{Error, Result};
pub use markov::{Distribution, Regime, RegimeLabel, SpectralSummary, StochasticMatrix};
pub use phase::{CompressedReflection, ErrorBudget, PhaseDetectionConfig};
pub use protocol::{
    failure_bound, FailureBound, FirstStepHint, PrepMethod, ProtocolConfig, ProtocolRun,
    SampleCache, StepResult,
};
pub use rng::RngStream;
pub use sim::{LinearOperator, OpKind, Register, StateVector};
pub use walk::WalkBundle;
