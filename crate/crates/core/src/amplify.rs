//! Amplitude amplification over the walk: sampling from a truncated
//! stationary distribution (search), preparing the coherent stationary
//! state from a basis seed (unsearch) or from the uniform superposition,
//! and the randomized iteration schedule for unknown overlap.
//!
//! Search alternates the marked-set phase flip with the reflection through
//! the stationary state. With exact reflections, starting from the
//! stationary state the iterates stay in the plane spanned by it and the
//! truncated target, rotating by twice the marked-mass angle per step; the
//! reverse iteration walks the same rotation backwards, which is what turns
//! a basis seed into the stationary state.

use std::f64::consts::FRAC_PI_4;

use crate::error::{Error, Result};
use crate::ledger::CostLedger;
use crate::markov::Distribution;
use crate::phase::{pi_projective_measurement, CompressedReflection, PhaseDetectionConfig};
use crate::rng::RngStream;
use crate::sim::{measure_register, LinearOperator, Register, StateVector};
use crate::walk::WalkBundle;

/// Nonempty, duplicate-free set of marked basis states.
#[derive(Debug, Clone)]
pub struct MarkedSet {
    n: usize,
    indices: Vec<usize>,
}

impl MarkedSet {
    pub fn new(n: usize, mut indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::PreconditionViolated {
                what: "marked set must be nonempty".into(),
            });
        }
        indices.sort_unstable();
        for pair in indices.windows(2) {
            if pair[0] == pair[1] {
                return Err(Error::PreconditionViolated {
                    what: format!("duplicate marked index {}", pair[0]),
                });
            }
        }
        if let Some(&last) = indices.last() {
            if last >= n {
                return Err(Error::PreconditionViolated {
                    what: format!("marked index {last} outside 0..{n}"),
                });
            }
        }
        Ok(Self { n, indices })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    /// Stationary mass on the marked set.
    pub fn mass(&self, pi: &Distribution) -> f64 {
        self.indices.iter().map(|&i| pi.get(i)).sum()
    }

    /// The stationary distribution conditioned on the marked set.
    pub fn truncated(&self, pi: &Distribution) -> Result<Distribution> {
        let mass = self.mass(pi);
        if mass <= 0.0 {
            return Err(Error::PreconditionViolated {
                what: "marked set carries no stationary mass".into(),
            });
        }
        let probs: Vec<f64> = (0..self.n)
            .map(|i| if self.contains(i) { pi.get(i) / mass } else { 0.0 })
            .collect();
        Distribution::from_probs(probs)
    }
}

/// Phase flip on marked register-I states.
pub fn marked_phase_flip(m: &MarkedSet) -> LinearOperator {
    let mut mask = vec![false; m.n];
    for &i in &m.indices {
        mask[i] = true;
    }
    LinearOperator::marked_flip(m.n, mask)
}

/// Outcome of one amplification routine.
#[derive(Debug, Clone)]
pub struct AmplificationReport {
    pub succeeded: bool,
    pub attempts: u64,
    pub iterations_used: u64,
    pub walk_calls: u64,
    pub diffusion_calls: u64,
    pub sampled_index: Option<usize>,
    pub output_state: Option<StateVector>,
}

/// Grover iteration count for a known squared overlap.
pub fn grover_iterations(overlap_sq: f64) -> u64 {
    let f = overlap_sq.clamp(0.0, 1.0);
    if f >= 1.0 {
        return 0;
    }
    let theta = f.sqrt().asin();
    if theta >= FRAC_PI_4 || theta <= 0.0 {
        0
    } else {
        (FRAC_PI_4 / theta).floor() as u64
    }
}

/// Reflection accuracy used by the amplification routines at confidence
/// `c`.
pub fn reflection_epsilon(c: u32) -> f64 {
    (0.5f64.powi(c as i32) / 4.0).clamp(0.5f64.powi(16), 0.05)
}

pub(crate) fn stationary_reflection(bundle: &WalkBundle, c: u32) -> Result<CompressedReflection> {
    let cfg =
        PhaseDetectionConfig::for_target(bundle.predicted_phase_gap, reflection_epsilon(c))?;
    CompressedReflection::new(bundle, cfg)
}

fn retry_budget(c: u32) -> u64 {
    (3 * c as u64).max(1)
}

/// Sample from the truncated stationary distribution on the marked set.
pub fn search(
    bundle: &WalkBundle,
    marked: &MarkedSet,
    c: u32,
    rng: &mut RngStream,
    ledger: &mut CostLedger,
) -> Result<AmplificationReport> {
    if marked.n() != bundle.n() {
        return Err(Error::DimensionMismatch { expected: bundle.n(), got: marked.n() });
    }
    let mass = marked.mass(&bundle.pi);
    if mass <= 0.0 {
        return Err(Error::PreconditionViolated {
            what: "marked set carries no stationary mass".into(),
        });
    }
    let flip = marked_phase_flip(marked);
    let refl = stationary_reflection(bundle, c)?;
    let pi_state = bundle.stationary_state()?;
    let m_opt = grover_iterations(mass);
    let mark = ledger.checkpoint();
    let budget = retry_budget(c);
    let mut iterations = 0u64;
    for attempt in 1..=budget {
        let mut state = pi_state.clone();
        let mut aborted = false;
        for _ in 0..m_opt {
            state = flip.apply(&state)?;
            match refl.reflect_postselect(&state, rng, ledger)? {
                Some(next) => state = next,
                None => {
                    aborted = true;
                    break;
                }
            }
            iterations += 1;
        }
        if aborted {
            continue;
        }
        ledger.charge_projective_measurement();
        let (index, _) = measure_register(&state, Register::I, rng);
        if marked.contains(index) {
            let spent = ledger.since(&mark);
            return Ok(AmplificationReport {
                succeeded: true,
                attempts: attempt,
                iterations_used: iterations,
                walk_calls: spent.walk_calls,
                diffusion_calls: spent.diffusion_calls,
                sampled_index: Some(index),
                output_state: None,
            });
        }
    }
    Err(Error::ExhaustedRetries {
        attempts: budget as usize,
        what: "search never measured a marked index".into(),
    })
}

/// One reverse Grover pass: `m` iterations of reflection-then-flip applied
/// to the coherent seed `U_P|i>|0>`. Returns the state, or `None` when a
/// reflection ancilla check flags.
pub fn reverse_pass(
    bundle: &WalkBundle,
    refl: &CompressedReflection,
    flip: &LinearOperator,
    seed_index: usize,
    m: u64,
    rng: &mut RngStream,
    ledger: &mut CostLedger,
) -> Result<Option<StateVector>> {
    let seed = StateVector::basis(bundle.n(), seed_index, 0);
    let mut state = bundle.u_p.apply_counted(&seed, ledger)?;
    for _ in 0..m {
        match refl.reflect_postselect(&state, rng, ledger)? {
            Some(next) => state = flip.apply(&next)?,
            None => return Ok(None),
        }
    }
    Ok(Some(state))
}

/// Prepare the coherent stationary state by running the search rotation
/// backwards from a basis seed, then purifying with the projective
/// measurement.
pub fn unsearch_from_basis(
    bundle: &WalkBundle,
    seed_index: usize,
    c: u32,
    rng: &mut RngStream,
    ledger: &mut CostLedger,
) -> Result<AmplificationReport> {
    let n = bundle.n();
    if seed_index >= n {
        return Err(Error::DomainError {
            what: format!("seed index {seed_index} outside 0..{n}"),
        });
    }
    let seed_mass = bundle.pi.get(seed_index);
    if seed_mass <= 0.0 {
        return Err(Error::PreconditionViolated {
            what: format!("seed state {seed_index} has zero stationary probability"),
        });
    }
    let marked = MarkedSet::new(n, vec![seed_index])?;
    let flip = marked_phase_flip(&marked);
    let refl = stationary_reflection(bundle, c)?;
    let m_opt = grover_iterations(seed_mass);
    let mark = ledger.checkpoint();
    let budget = retry_budget(c);
    let mut iterations = 0u64;
    for attempt in 1..=budget {
        let state = match reverse_pass(bundle, &refl, &flip, seed_index, m_opt, rng, ledger)? {
            Some(s) => {
                iterations += m_opt;
                s
            }
            None => continue,
        };
        let (ok, post) = pi_projective_measurement(bundle, &state, c, rng, ledger)?;
        if ok {
            let spent = ledger.since(&mark);
            return Ok(AmplificationReport {
                succeeded: true,
                attempts: attempt,
                iterations_used: iterations,
                walk_calls: spent.walk_calls,
                diffusion_calls: spent.diffusion_calls,
                sampled_index: None,
                output_state: Some(post),
            });
        }
    }
    Err(Error::ExhaustedRetries {
        attempts: budget as usize,
        what: format!("unsearch from seed {seed_index} never purified"),
    })
}

/// The coherent uniform superposition `U_P|u>|0>`.
pub fn uniform_state(bundle: &WalkBundle, ledger: &mut CostLedger) -> Result<StateVector> {
    let n = bundle.n();
    let amp = 1.0 / (n as f64).sqrt();
    let mut probs = vec![0.0f64; n * n];
    for i in 0..n {
        probs[i * n] = amp;
    }
    let raw = StateVector::from_real_walk(n, &probs)?;
    bundle.u_p.apply_counted(&raw, ledger)
}

pub(crate) fn prepare_from_uniform_impl(
    bundle: &WalkBundle,
    c: u32,
    rng: &mut RngStream,
    ledger: &mut CostLedger,
    direct_pre_phase: bool,
) -> Result<AmplificationReport> {
    let mark = ledger.checkpoint();
    let mut attempts = 0u64;
    if direct_pre_phase {
        for _ in 0..retry_budget(c) {
            attempts += 1;
            let state = uniform_state(bundle, ledger)?;
            let (ok, post) = pi_projective_measurement(bundle, &state, c, rng, ledger)?;
            if ok {
                let spent = ledger.since(&mark);
                return Ok(AmplificationReport {
                    succeeded: true,
                    attempts,
                    iterations_used: 0,
                    walk_calls: spent.walk_calls,
                    diffusion_calls: spent.diffusion_calls,
                    sampled_index: None,
                    output_state: Some(post),
                });
            }
        }
    }
    let uniform = Distribution::uniform(bundle.n());
    let f = uniform.fidelity_coherent(&bundle.pi)?;
    let m_opt = grover_iterations(f);
    let refl = stationary_reflection(bundle, c)?;
    let mut iterations = 0u64;
    for _ in 0..retry_budget(c) {
        attempts += 1;
        let u_state = uniform_state(bundle, ledger)?;
        let r_u = LinearOperator::reflect_about(u_state.clone());
        let mut state = u_state;
        let mut aborted = false;
        for _ in 0..m_opt {
            match refl.reflect_postselect(&state, rng, ledger)? {
                Some(next) => state = next,
                None => {
                    aborted = true;
                    break;
                }
            }
            ledger.charge_diffusion_calls(2);
            state = r_u.apply(&state)?;
            iterations += 1;
        }
        if aborted {
            continue;
        }
        let (ok, post) = pi_projective_measurement(bundle, &state, c, rng, ledger)?;
        if ok {
            let spent = ledger.since(&mark);
            return Ok(AmplificationReport {
                succeeded: true,
                attempts,
                iterations_used: iterations,
                walk_calls: spent.walk_calls,
                diffusion_calls: spent.diffusion_calls,
                sampled_index: None,
                output_state: Some(post),
            });
        }
    }
    Err(Error::ExhaustedRetries {
        attempts: attempts as usize,
        what: "preparation from uniform never purified".into(),
    })
}

/// Prepare the coherent stationary state from the uniform superposition:
/// direct projective measurements first, then known-overlap amplification
/// between the exact uniform reflection and the approximate stationary
/// reflection.
pub fn prepare_from_uniform_amplified(
    bundle: &WalkBundle,
    c: u32,
    rng: &mut RngStream,
    ledger: &mut CostLedger,
) -> Result<AmplificationReport> {
    prepare_from_uniform_impl(bundle, c, rng, ledger, true)
}

/// Randomized iteration counts for unknown overlap: ranges grow by factor
/// 6/5 up to the cap, one uniform draw per range.
pub fn boyer_schedule(max_iterations: usize, rng: &mut RngStream) -> Vec<usize> {
    let cap = max_iterations.max(1);
    let mut len = 3usize;
    if cap > 1 {
        len += ((cap as f64).ln() / (6.0f64 / 5.0).ln()).ceil() as usize;
    }
    let mut out = Vec::with_capacity(len);
    let mut bound = 1.0f64;
    for _ in 0..len {
        bound = (bound * 6.0 / 5.0).min(cap as f64);
        let hi = bound.ceil() as usize;
        out.push(1 + rng.below(hi.max(1)));
    }
    out
}
