//! Phase detection on the walk operator, the stationary projective
//! measurement, and the approximate reflection through the stationary
//! state.
//!
//! One detection round attaches `r` ancillas, Hadamards them, applies
//! controlled walk powers `W^1, W^2, ..., W^{2^{r-1}}`, Hadamards again and
//! reads the ancillas. A zero readout applies the Kraus operator
//! `G = 2^{-r} sum_x W^x` to the walk state; nonzero-phase eigenvectors
//! survive with amplitude at most `1/(2^r sin(gap/2))`, so iterating rounds
//! suppresses them geometrically. The reflection runs the detection
//! coherently, flips every nonzero ancilla pattern and uncomputes.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::ledger::CostLedger;
use crate::rng::RngStream;
use crate::sim::{ExtendedRule, LinearOperator, OpKind, StateVector};
use crate::walk::{membership_test_a_counted, WalkBundle};

/// Sizing of one phase-detection circuit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseDetectionConfig {
    pub ancilla_bits: u32,
    pub repetitions: u32,
    pub epsilon: f64,
}

impl PhaseDetectionConfig {
    /// Size a reflection-grade config for a walk with the given phase gap:
    /// enough ancillas that one round leaks at most `1/(2 sqrt 2)` of a
    /// nonzero-phase amplitude, and enough repetitions that the reflection
    /// error `2 leak^k` falls below `epsilon`.
    pub fn for_target(phase_gap: f64, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::DomainError {
                what: format!("target error {epsilon} outside (0,1)"),
            });
        }
        if !(phase_gap > 0.0) {
            return Err(Error::DomainError {
                what: format!("phase gap {phase_gap} must be positive"),
            });
        }
        let r = ((2.0 * std::f64::consts::PI / phase_gap).log2().ceil() as u32).max(2);
        let k = ((2.0 / epsilon).log2().ceil() as u32).max(1);
        Ok(Self { ancilla_bits: r, repetitions: k, epsilon })
    }

    /// Config for the stationary projective measurement at confidence `c`:
    /// `c` rounds drive the false-positive probability below `8^{-c}`.
    pub fn for_membership(phase_gap: f64, confidence: u32) -> Result<Self> {
        if confidence < 1 {
            return Err(Error::DomainError {
                what: "confidence must be at least 1".into(),
            });
        }
        let base = Self::for_target(phase_gap, 0.5)?;
        Ok(Self {
            ancilla_bits: base.ancilla_bits,
            repetitions: confidence,
            epsilon: 0.5f64.powi(confidence as i32),
        })
    }

    /// Surviving amplitude bound for a nonzero-phase eigenvector in one
    /// round.
    pub fn round_leak(&self, phase_gap: f64) -> f64 {
        let denom = (1u64 << self.ancilla_bits) as f64 * (phase_gap / 2.0).sin();
        if denom <= 0.0 {
            1.0
        } else {
            (1.0 / denom).min(1.0)
        }
    }

    /// One detection round must resolve the gap to within `epsilon` in
    /// probability.
    pub fn validate_round(&self, phase_gap: f64) -> Result<()> {
        let leak = self.round_leak(phase_gap);
        let achievable = leak * leak;
        if achievable > self.epsilon {
            return Err(Error::ConfigTooCoarse {
                rounds: self.repetitions as usize,
                achievable,
                requested: self.epsilon,
            });
        }
        Ok(())
    }

    /// The iterated reflection error `2 leak^k` must fall below `epsilon`.
    pub fn validate_reflection(&self, phase_gap: f64) -> Result<()> {
        let leak = self.round_leak(phase_gap);
        let achievable = 2.0 * leak.powi(self.repetitions as i32);
        if achievable > self.epsilon {
            return Err(Error::ConfigTooCoarse {
                rounds: self.repetitions as usize,
                achievable,
                requested: self.epsilon,
            });
        }
        Ok(())
    }

    /// Controlled walk calls in one round: `2^0 + ... + 2^{r-1}`.
    pub fn walk_calls_per_round(&self) -> u64 {
        (1u64 << self.ancilla_bits) - 1
    }

    /// Controlled walk calls in one reflection application.
    pub fn reflection_walk_calls(&self) -> u64 {
        2 * self.repetitions as u64 * self.walk_calls_per_round()
    }
}

/// One detection round: returns the ancilla readout and the collapsed walk
/// state. Charges `2^r - 1` walk calls and one projective measurement.
pub fn detection_round(
    bundle: &WalkBundle,
    state: &StateVector,
    cfg: &PhaseDetectionConfig,
    rng: &mut RngStream,
    ledger: &mut CostLedger,
) -> Result<(usize, StateVector)> {
    let count = 1usize << cfg.ancilla_bits;
    let mut branches: Vec<Vec<Complex64>> = Vec::with_capacity(count);
    branches.push(state.amps().to_vec());
    let mut cur = state.clone();
    for _ in 1..count {
        cur = bundle.w.apply_counted(&cur, ledger)?;
        branches.push(cur.amps().to_vec());
    }
    let mut stride = 1;
    while stride < count {
        let mut start = 0;
        while start < count {
            for off in 0..stride {
                let (lo, hi) = branches.split_at_mut(start + off + stride);
                let a = &mut lo[start + off];
                let b = &mut hi[0];
                for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                    let s = *x + *y;
                    let d = *x - *y;
                    *x = s;
                    *y = d;
                }
            }
            start += stride * 2;
        }
        stride *= 2;
    }
    let scale = 1.0 / count as f64;
    let weights: Vec<f64> = branches
        .iter()
        .map(|v| v.iter().map(|a| a.norm_sqr()).sum::<f64>() * scale * scale)
        .collect();
    ledger.charge_projective_measurement();
    let outcome = rng.weighted(&weights);
    let mut post = StateVector::raw(state.n(), state.ancilla_bits(), branches.swap_remove(outcome));
    post.renormalize();
    Ok((outcome, post))
}

/// Single-round phase detection: true when every ancilla reads zero.
pub fn phase_detect(
    bundle: &WalkBundle,
    state: &StateVector,
    cfg: &PhaseDetectionConfig,
    rng: &mut RngStream,
    ledger: &mut CostLedger,
) -> Result<(bool, StateVector)> {
    cfg.validate_round(bundle.predicted_phase_gap)?;
    let (outcome, post) = detection_round(bundle, state, cfg, rng, ledger)?;
    Ok((outcome == 0, post))
}

/// Projective measurement onto the stationary state: membership in `A`
/// first, then `c` detection rounds that all must read zero. On success
/// the post state is within `2^{-c}` of the stationary state in fidelity
/// whenever the input carried at least half its weight there; the success
/// probability deviates from that weight by at most `8^{-c}`.
pub fn pi_projective_measurement(
    bundle: &WalkBundle,
    state: &StateVector,
    confidence: u32,
    rng: &mut RngStream,
    ledger: &mut CostLedger,
) -> Result<(bool, StateVector)> {
    let cfg = PhaseDetectionConfig::for_membership(bundle.predicted_phase_gap, confidence)?;
    let (member, mut post) = membership_test_a_counted(state, &bundle.u_p, rng, ledger)?;
    if !member {
        return Ok((false, post));
    }
    for _ in 0..cfg.repetitions {
        let (outcome, next) = detection_round(bundle, &post, &cfg, rng, ledger)?;
        post = next;
        if outcome != 0 {
            return Ok((false, post));
        }
    }
    Ok((true, post))
}

/// Walk-space compression of the approximate reflection. Applying the
/// non-unitary `T = 2 (G*)^k G^k - 1` and accepting with probability
/// `|T psi|^2` reproduces the statistics of running the coherent circuit
/// and finding the ancillas back at zero; rejection corresponds to a
/// flagged ancilla readout.
#[derive(Debug, Clone)]
pub struct CompressedReflection {
    w: LinearOperator,
    w_adj: LinearOperator,
    cfg: PhaseDetectionConfig,
}

impl CompressedReflection {
    pub fn new(bundle: &WalkBundle, cfg: PhaseDetectionConfig) -> Result<Self> {
        cfg.validate_reflection(bundle.predicted_phase_gap)?;
        Ok(Self { w: bundle.w.clone(), w_adj: bundle.w.adjoint(), cfg })
    }

    pub fn config(&self) -> &PhaseDetectionConfig {
        &self.cfg
    }

    pub fn walk_calls_per_application(&self) -> u64 {
        self.cfg.reflection_walk_calls()
    }

    fn apply_g(&self, state: &StateVector, adjoint: bool) -> Result<StateVector> {
        let op = if adjoint { &self.w_adj } else { &self.w };
        let count = 1usize << self.cfg.ancilla_bits;
        let mut acc = state.amps().to_vec();
        let mut cur = state.clone();
        for _ in 1..count {
            cur = op.apply(&cur)?;
            for (a, b) in acc.iter_mut().zip(cur.amps()) {
                *a += b;
            }
        }
        let scale = 1.0 / count as f64;
        for a in &mut acc {
            *a *= scale;
        }
        Ok(StateVector::raw(state.n(), state.ancilla_bits(), acc))
    }

    /// Apply `T`; the result has norm at most 1. Charges the full
    /// controlled walk cost of one reflection.
    pub fn apply_t(&self, state: &StateVector, ledger: &mut CostLedger) -> Result<StateVector> {
        ledger.charge_walk_calls(self.walk_calls_per_application());
        let mut cur = state.clone();
        for _ in 0..self.cfg.repetitions {
            cur = self.apply_g(&cur, false)?;
        }
        for _ in 0..self.cfg.repetitions {
            cur = self.apply_g(&cur, true)?;
        }
        let amps: Vec<Complex64> = cur
            .amps()
            .iter()
            .zip(state.amps())
            .map(|(g, s)| 2.0 * g - s)
            .collect();
        Ok(StateVector::raw(state.n(), state.ancilla_bits(), amps))
    }

    /// One reflection call with the ancilla check: `Some(state)` when the
    /// ancillas verify as returned to zero, `None` when the check flags.
    pub fn reflect_postselect(
        &self,
        state: &StateVector,
        rng: &mut RngStream,
        ledger: &mut CostLedger,
    ) -> Result<Option<StateVector>> {
        let t = self.apply_t(state, ledger)?;
        let p = t.norm().powi(2).clamp(0.0, 1.0);
        ledger.charge_projective_measurement();
        if rng.bernoulli(p) {
            let mut out = t;
            out.renormalize();
            Ok(Some(out))
        } else {
            Ok(None)
        }
    }
}

#[derive(Debug)]
struct AroRule {
    w: LinearOperator,
    w_adj: LinearOperator,
    ancilla_bits_per_round: u32,
    rounds: u32,
}

impl AroRule {
    fn hadamard_bit(&self, s: &mut StateVector, bit: u32) {
        let d = s.walk_dim();
        let total = s.dim() / d;
        let mask = 1usize << bit;
        let inv = std::f64::consts::FRAC_1_SQRT_2;
        let amps = s.amps_mut();
        for a in 0..total {
            if a & mask != 0 {
                continue;
            }
            let b = a | mask;
            for w_idx in 0..d {
                let x = amps[a * d + w_idx];
                let y = amps[b * d + w_idx];
                amps[a * d + w_idx] = (x + y) * inv;
                amps[b * d + w_idx] = (x - y) * inv;
            }
        }
    }

    fn controlled_power(&self, s: &mut StateVector, bit: u32, power: u32, adjoint: bool) {
        let d = s.walk_dim();
        let n = s.n();
        let total = s.dim() / d;
        let mask = 1usize << bit;
        let op = if adjoint { &self.w_adj } else { &self.w };
        for a in 0..total {
            if a & mask == 0 {
                continue;
            }
            let slice = s.amps()[a * d..(a + 1) * d].to_vec();
            let mut block = StateVector::raw(n, 0, slice);
            for _ in 0..(1u32 << power) {
                block = op.apply(&block).expect("walk dimension fixed by construction");
            }
            s.amps_mut()[a * d..(a + 1) * d].copy_from_slice(block.amps());
        }
    }

    fn round(&self, s: &mut StateVector, block: u32, adjoint: bool) {
        let base = block * self.ancilla_bits_per_round;
        for j in 0..self.ancilla_bits_per_round {
            self.hadamard_bit(s, base + j);
        }
        for j in 0..self.ancilla_bits_per_round {
            self.controlled_power(s, base + j, j, adjoint);
        }
        for j in 0..self.ancilla_bits_per_round {
            self.hadamard_bit(s, base + j);
        }
    }

    fn flip_nonzero(&self, s: &mut StateVector) {
        let d = s.walk_dim();
        for (idx, amp) in s.amps_mut().iter_mut().enumerate() {
            if idx / d != 0 {
                *amp = -*amp;
            }
        }
    }
}

impl ExtendedRule for AroRule {
    fn ancilla_bits(&self) -> u32 {
        self.ancilla_bits_per_round * self.rounds
    }

    fn apply(&self, s: &mut StateVector) {
        for block in 0..self.rounds {
            self.round(s, block, false);
        }
        self.flip_nonzero(s);
        for block in (0..self.rounds).rev() {
            self.round(s, block, true);
        }
    }
}

/// The coherent approximate reflection as an operator on the walk space
/// extended by `r*k` ancillas. Each application is charged its full
/// controlled walk cost.
pub fn approximate_reflection(
    bundle: &WalkBundle,
    cfg: &PhaseDetectionConfig,
) -> Result<LinearOperator> {
    cfg.validate_reflection(bundle.predicted_phase_gap)?;
    let total_bits = cfg.ancilla_bits * cfg.repetitions;
    let dim = bundle.walk_dim();
    let amplitudes = (dim as u128) << total_bits;
    if amplitudes > (1u128 << 22) {
        return Err(Error::DomainError {
            what: format!(
                "extended reflection needs {amplitudes} amplitudes; \
                 use the compressed form instead"
            ),
        });
    }
    let rule = AroRule {
        w: bundle.w.clone(),
        w_adj: bundle.w.adjoint(),
        ancilla_bits_per_round: cfg.ancilla_bits,
        rounds: cfg.repetitions,
    };
    Ok(LinearOperator::extended(dim, Arc::new(rule))
        .with_kind(OpKind::WalkCall)
        .with_charge(cfg.reflection_walk_calls()))
}

/// Precision split for one protocol step.
#[derive(Debug, Clone)]
pub struct ErrorBudget {
    pub eps_meas: f64,
    pub eps_samp: f64,
    pub measurement: PhaseDetectionConfig,
    pub sampling: PhaseDetectionConfig,
}

/// Measurement precision `eta/4` (so a success rate near `eta` degrades to
/// no worse than `eta/2`) and sample precision `2^{-2c}`, each packaged
/// with a detection config sized for the chain's gap.
pub fn error_budget(c: u32, eta: f64, delta: f64) -> Result<ErrorBudget> {
    if c < 1 {
        return Err(Error::DomainError { what: "confidence must be at least 1".into() });
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::DomainError { what: format!("eta {eta} outside (0,1]") });
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::DomainError { what: format!("delta {delta} outside (0,1]") });
    }
    let gap = 2.0 * (1.0 - delta).acos();
    let eps_meas = eta / 4.0;
    let eps_samp = 0.25f64.powi(c as i32);
    Ok(ErrorBudget {
        eps_meas,
        eps_samp,
        measurement: PhaseDetectionConfig::for_target(gap, eps_meas)?,
        sampling: PhaseDetectionConfig::for_target(gap, eps_samp)?,
    })
}

/// Exact reflection through the coherent stationary state, as an oracle
/// for accuracy tests.
pub fn exact_reflection(bundle: &WalkBundle) -> Result<LinearOperator> {
    Ok(LinearOperator::reflect_about(bundle.stationary_state()?))
}
