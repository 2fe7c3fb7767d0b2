//! Sequential preparation over a slowly evolving chain sequence: per step,
//! prepare the coherent stationary state and a batch of classical samples,
//! switching between preparation from the uniform superposition and
//! rebuilding the previous step's state from cached samples.
//!
//! The run keeps at most one previous walk bundle and one sample cache in
//! memory. A step first tries the uniform route (one budget-capped
//! randomized amplification per needed copy); any failure aborts the route
//! and the step back-tracks, rebuilding the previous state from cached
//! seeds and projecting it onto the current one. A step fails only after
//! both routes exhaust their retry budgets, and an optional fallback then
//! prepares from uniform with the unconditional iteration cap.

use crate::amplify::{
    boyer_schedule, marked_phase_flip, reverse_pass, stationary_reflection, uniform_state,
    MarkedSet,
};
use crate::error::{Error, Result};
use crate::ledger::{CostLedger, StepCost};
use crate::markov::StochasticMatrix;
use crate::phase::pi_projective_measurement;
use crate::rng::RngStream;
use crate::sim::{measure_register, LinearOperator, Register, StateVector};
use crate::walk::{build_walk, WalkBundle};

/// Which preparation route produced a step's samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrepMethod {
    Uniform,
    Samples,
    Fallback,
}

impl PrepMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            PrepMethod::Uniform => "uniform",
            PrepMethod::Samples => "samples",
            PrepMethod::Fallback => "fallback",
        }
    }
}

/// Protocol parameters.
#[derive(Debug, Clone, Copy)]
pub struct ProtocolConfig {
    /// Confidence parameter: samples cached per step, and the exponent in
    /// the 2^-c failure accounting.
    pub c: u32,
    /// Assumed lower bound on the fidelity between consecutive stationary
    /// states.
    pub eta: f64,
    /// Multiplicative closeness bound on consecutive spectral gaps.
    pub kappa: f64,
    /// State count of every chain in the sequence.
    pub n: usize,
    /// Whether a failed step falls back to the unconditional preparation
    /// instead of propagating the failure.
    pub fallback: bool,
}

impl ProtocolConfig {
    pub fn new(c: u32, eta: f64, kappa: f64, n: usize, fallback: bool) -> Result<Self> {
        if c < 1 {
            return Err(Error::DomainError {
                what: "confidence must be at least 1".into(),
            });
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::DomainError {
                what: format!("neighbor fidelity bound {eta} outside (0,1]"),
            });
        }
        if !(kappa >= 1.0) {
            return Err(Error::DomainError {
                what: format!("gap closeness {kappa} below 1"),
            });
        }
        if n < 2 {
            return Err(Error::TooFewStates { need: 2, got: n });
        }
        Ok(Self { c, eta, kappa, n, fallback })
    }

    /// Internal confidence: one more than requested, so that the per-step
    /// bookkeeping keeps the overall failure accounting at 2^-c.
    fn conf(&self) -> u32 {
        self.c + 1
    }
}

/// Samples drawn in one step, kept for seeding the next step's rebuilds.
#[derive(Debug, Clone)]
pub struct SampleCache {
    pub step_index: u64,
    pub samples: Vec<usize>,
    pub method_used: PrepMethod,
}

/// Everything a completed step reports.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub t: u64,
    pub output_sample: usize,
    pub coherent_state: Option<StateVector>,
    pub coherent_state_available: bool,
    pub cache: SampleCache,
    pub extra_samples: Vec<usize>,
    pub cost: StepCost,
    pub failed: bool,
    pub method: PrepMethod,
    pub delta: f64,
}

/// How the first step's state is cheap to prepare.
#[derive(Debug, Clone, Copy)]
pub enum FirstStepHint {
    /// A known index carrying stationary mass at least 1/sqrt(N).
    KnownMode(usize),
    /// The uniform superposition has squared overlap at least 1/sqrt(N)
    /// with the stationary state.
    UniformFidelity,
}

/// Analytic per-step failure probabilities at confidence `c`.
#[derive(Debug, Clone, Copy)]
pub struct FailureBound {
    /// 1 - (1 - 4^-c)^c, the exact probability that at least one of c
    /// preparations misses when each misses with probability 4^-c.
    pub exact: f64,
    /// 2^-c, the bound with ideal reflections.
    pub ideal_bound: f64,
    /// 2^-(c-1), the bound with imperfect reflections.
    pub imperfect_bound: f64,
}

pub fn failure_bound(c: u32) -> Result<FailureBound> {
    if c < 1 {
        return Err(Error::DomainError {
            what: "confidence must be at least 1".into(),
        });
    }
    let miss = 0.25f64.powi(c as i32);
    Ok(FailureBound {
        exact: 1.0 - (1.0 - miss).powi(c as i32),
        ideal_bound: 0.5f64.powi(c as i32),
        imperfect_bound: 0.5f64.powi(c as i32 - 1),
    })
}

fn quarter_power_cap(n: usize) -> usize {
    (2.0 * (n as f64).powf(0.25)).ceil() as usize
}

fn sqrt_cap(n: usize) -> usize {
    (2.0 * (n as f64).sqrt()).ceil() as usize
}

const COPY_ATTEMPT_BUDGET: u64 = 64;
const FALLBACK_ATTEMPT_BUDGET: u64 = 256;
const DIRECT_CERTIFICATE_BOUND: f64 = 0.25;

/// One amplification attempt from the uniform superposition: `m` rounds of
/// the approximate stationary reflection followed by the exact uniform
/// reflection, then the purifying measurement.
fn uniform_grover_attempt(
    bundle: &WalkBundle,
    conf: u32,
    m: u64,
    rng: &mut RngStream,
    ledger: &mut CostLedger,
) -> Result<Option<StateVector>> {
    let u_state = uniform_state(bundle, ledger)?;
    let mut state = u_state.clone();
    if m > 0 {
        let refl = stationary_reflection(bundle, conf)?;
        let r_u = LinearOperator::reflect_about(u_state);
        for _ in 0..m {
            match refl.reflect_postselect(&state, rng, ledger)? {
                Some(next) => {
                    ledger.charge_diffusion_calls(2);
                    state = r_u.apply(&next)?;
                }
                None => return Ok(None),
            }
        }
        ledger.charge_amplification_iterations(m);
    }
    let (ok, post) = pi_projective_measurement(bundle, &state, conf, rng, ledger)?;
    Ok(if ok { Some(post) } else { None })
}

/// Attempt the preparation from the uniform superposition. Direct
/// measurements run first: `3 * conf` failures certify, except with
/// probability `2^{-conf}`, that the squared uniform overlap sits below
/// 1/4. The randomized amplification that follows is budgeted for
/// overlaps of at least `1/sqrt(n)`, so when `1/sqrt(n) >= 1/4` the
/// certificate alone settles the regime and the attempt gives up;
/// otherwise iteration counts are drawn from geometrically growing
/// ranges until the quarter-power budget runs out. `None` signals an
/// unsuccessful attempt.
pub fn prepare_from_uniform_sub(
    bundle: &WalkBundle,
    conf: u32,
    rng: &mut RngStream,
    ledger: &mut CostLedger,
) -> Result<Option<StateVector>> {
    for _ in 0..3 * conf {
        if let Some(state) = uniform_grover_attempt(bundle, conf, 0, rng, ledger)? {
            return Ok(Some(state));
        }
    }
    if 1.0 / (bundle.n() as f64).sqrt() >= DIRECT_CERTIFICATE_BOUND {
        return Ok(None);
    }
    let cap = quarter_power_cap(bundle.n()) as u64;
    let mut budget = cap;
    let mut bound = 1.0f64;
    while budget > 0 {
        bound = (bound * 6.0 / 5.0).min(cap as f64);
        let m = (1 + rng.below(bound.ceil() as usize)) as u64;
        let m = m.min(budget);
        budget -= m;
        if let Some(state) = uniform_grover_attempt(bundle, conf, m, rng, ledger)? {
            return Ok(Some(state));
        }
    }
    Ok(None)
}

/// One rebuild attempt of a bundle's stationary state seeded by a cached
/// sample: reverse amplification with an obliviously drawn iteration
/// count, then the purifying measurement.
fn seeded_rebuild_attempt(
    bundle: &WalkBundle,
    seed: usize,
    cap: usize,
    conf: u32,
    rng: &mut RngStream,
    ledger: &mut CostLedger,
) -> Result<Option<StateVector>> {
    let marked = MarkedSet::new(bundle.n(), vec![seed])?;
    let flip = marked_phase_flip(&marked);
    let refl = stationary_reflection(bundle, conf)?;
    let m = rng.below(cap + 1) as u64;
    let state = match reverse_pass(bundle, &refl, &flip, seed, m, rng, ledger)? {
        Some(s) => s,
        None => return Ok(None),
    };
    ledger.charge_amplification_iterations(m);
    let (ok, post) = pi_projective_measurement(bundle, &state, conf, rng, ledger)?;
    Ok(if ok { Some(post) } else { None })
}

/// Outcome of the sample-seeded route.
#[derive(Debug)]
pub struct SamplesOutcome {
    pub samples: Vec<usize>,
    pub coherent: Option<StateVector>,
    /// Successful rebuilds of the previous state (the expected count per
    /// accepted copy is the inverse neighbor fidelity).
    pub rebuilds: u64,
    pub rebuilds_via_cache: u64,
    pub rebuilds_via_uniform: u64,
}

/// Back-track to the previous step: rebuild its stationary state from the
/// cached samples (or from uniform, whichever the previous step used
/// first), project the rebuilt copy onto the current state, and measure.
/// Repeats until the requested copies are produced.
pub fn prepare_samples_sub(
    bundle_prev: &WalkBundle,
    bundle_cur: &WalkBundle,
    cache_prev: &SampleCache,
    cfg: &ProtocolConfig,
    want_coherent: bool,
    rng: &mut RngStream,
    ledger: &mut CostLedger,
) -> Result<SamplesOutcome> {
    let conf = cfg.conf();
    let cap = quarter_power_cap(bundle_prev.n());
    let cache_first = cache_prev.method_used != PrepMethod::Uniform;
    let target = cfg.c as usize + usize::from(want_coherent);
    let mut samples = Vec::with_capacity(cfg.c as usize);
    let mut coherent = None;
    let mut rebuilds = 0u64;
    let mut via_cache = 0u64;
    let mut via_uniform = 0u64;
    let mut copies = 0usize;
    while copies < target {
        let mut produced = false;
        for _ in 0..COPY_ATTEMPT_BUDGET {
            let mut rebuilt: Option<StateVector> = None;
            let mut from_cache = false;
            for pass in 0..2 {
                let use_cache = cache_first == (pass == 0);
                if use_cache {
                    let seed = cache_prev.samples[rng.below(cache_prev.samples.len())];
                    if let Some(state) =
                        seeded_rebuild_attempt(bundle_prev, seed, cap, conf, rng, ledger)?
                    {
                        rebuilt = Some(state);
                        from_cache = true;
                        break;
                    }
                } else if let Some(state) =
                    prepare_from_uniform_sub(bundle_prev, 2 * cfg.c, rng, ledger)?
                {
                    rebuilt = Some(state);
                    break;
                }
            }
            let state = match rebuilt {
                Some(s) => s,
                None => continue,
            };
            rebuilds += 1;
            if from_cache {
                via_cache += 1;
            } else {
                via_uniform += 1;
            }
            let (ok, post) = pi_projective_measurement(bundle_cur, &state, conf, rng, ledger)?;
            if !ok {
                continue;
            }
            if samples.len() < cfg.c as usize {
                ledger.charge_projective_measurement();
                let (index, _) = measure_register(&post, Register::I, rng);
                samples.push(index);
            } else {
                coherent = Some(post);
            }
            copies += 1;
            produced = true;
            break;
        }
        if !produced {
            return Err(Error::StepFailure {
                step: cache_prev.step_index as usize + 1,
                what: "both rebuild routes exhausted their retry budgets".into(),
            });
        }
    }
    Ok(SamplesOutcome { samples, coherent, rebuilds, rebuilds_via_cache: via_cache, rebuilds_via_uniform: via_uniform })
}

/// Unconditional preparation from uniform with the square-root iteration
/// cap, which covers every stationary distribution.
pub fn fallback_full_prepare(
    bundle: &WalkBundle,
    cfg: &ProtocolConfig,
    want_coherent: bool,
    rng: &mut RngStream,
    ledger: &mut CostLedger,
) -> Result<(Vec<usize>, Option<StateVector>)> {
    let conf = cfg.conf();
    let cap = sqrt_cap(bundle.n());
    let target = cfg.c as usize + usize::from(want_coherent);
    let mut samples = Vec::with_capacity(cfg.c as usize);
    let mut coherent = None;
    let mut copies = 0usize;
    while copies < target {
        let mut produced = false;
        let mut attempts = 0u64;
        'sweeps: while attempts < FALLBACK_ATTEMPT_BUDGET {
            let mut draws = vec![0usize];
            draws.extend(boyer_schedule(cap, rng));
            for m in draws {
                attempts += 1;
                if let Some(post) =
                    uniform_grover_attempt(bundle, conf, m as u64, rng, ledger)?
                {
                    if samples.len() < cfg.c as usize {
                        ledger.charge_projective_measurement();
                        let (index, _) = measure_register(&post, Register::I, rng);
                        samples.push(index);
                    } else {
                        coherent = Some(post);
                    }
                    copies += 1;
                    produced = true;
                    break 'sweeps;
                }
                if attempts >= FALLBACK_ATTEMPT_BUDGET {
                    break;
                }
            }
        }
        if !produced {
            return Err(Error::ExhaustedRetries {
                attempts: FALLBACK_ATTEMPT_BUDGET as usize,
                what: "unconditional preparation from uniform".into(),
            });
        }
    }
    Ok((samples, coherent))
}

struct PrevStep {
    bundle: WalkBundle,
    cache: SampleCache,
    #[allow(dead_code)]
    delta: f64,
}

/// A sequential run over a chain sequence. Holds at most the previous
/// step's walk bundle and sample cache between steps.
pub struct ProtocolRun {
    cfg: ProtocolConfig,
    prev: Option<PrevStep>,
    t: u64,
}

impl ProtocolRun {
    pub fn new(cfg: ProtocolConfig) -> Self {
        Self { cfg, prev: None, t: 0 }
    }

    /// Start mid-sequence from an injected previous step, for fault
    /// injection and resumption tests.
    pub fn with_state(cfg: ProtocolConfig, chain: &StochasticMatrix, cache: SampleCache, delta: f64) -> Result<Self> {
        let bundle = build_walk(chain)?;
        let t = cache.step_index;
        Ok(Self { cfg, prev: Some(PrevStep { bundle, cache, delta }), t })
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.cfg
    }

    /// Walk bundles currently held between steps.
    pub fn bundle_count(&self) -> usize {
        usize::from(self.prev.is_some())
    }

    /// Advance one time step: prepare the current chain's stationary
    /// state, cache c fresh samples, and output one of them.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        chain: &StochasticMatrix,
        delta_lower: f64,
        hint: Option<FirstStepHint>,
        extra_samples: usize,
        want_coherent: bool,
        rng: &mut RngStream,
        ledger: &mut CostLedger,
    ) -> Result<StepResult> {
        let t = self.t + 1;
        let bundle = build_walk(chain)?;
        if bundle.n() != self.cfg.n {
            return Err(Error::DimensionMismatch { expected: self.cfg.n, got: bundle.n() });
        }
        let mark = ledger.checkpoint();
        ledger.charge_wall_step();
        let (samples, coherent, method, failed) = match &self.prev {
            None => self.first_step(&bundle, hint, want_coherent, rng, ledger)?,
            Some(prev) => {
                match self.uniform_route(&bundle, want_coherent, rng, ledger)? {
                    Some((samples, coherent)) => (samples, coherent, PrepMethod::Uniform, false),
                    None => {
                        let outcome = prepare_samples_sub(
                            &prev.bundle,
                            &bundle,
                            &prev.cache,
                            &self.cfg,
                            want_coherent,
                            rng,
                            ledger,
                        );
                        match outcome {
                            Ok(out) => (out.samples, out.coherent, PrepMethod::Samples, false),
                            Err(Error::StepFailure { .. }) if self.cfg.fallback => {
                                let (samples, coherent) = fallback_full_prepare(
                                    &bundle,
                                    &self.cfg,
                                    want_coherent,
                                    rng,
                                    ledger,
                                )?;
                                (samples, coherent, PrepMethod::Fallback, true)
                            }
                            Err(e) => return Err(e),
                        }
                    }
                }
            }
        };
        let cache = SampleCache { step_index: t, samples, method_used: method };
        let extra = self.draw_extras(&bundle, &cache, extra_samples, rng, ledger)?;
        let output_sample = *cache.samples.last().expect("cache holds c samples");
        let cost = ledger.since(&mark);
        self.prev = Some(PrevStep { bundle, cache: cache.clone(), delta: delta_lower });
        self.t = t;
        debug_assert!(self.bundle_count() <= 1);
        Ok(StepResult {
            t,
            output_sample,
            coherent_state_available: coherent.is_some(),
            coherent_state: coherent,
            cache,
            extra_samples: extra,
            cost,
            failed,
            method,
            delta: delta_lower,
        })
    }

    /// The uniform route for a non-initial step: one capped preparation
    /// per needed copy; any unsuccessful attempt aborts the whole route.
    fn uniform_route(
        &self,
        bundle: &WalkBundle,
        want_coherent: bool,
        rng: &mut RngStream,
        ledger: &mut CostLedger,
    ) -> Result<Option<(Vec<usize>, Option<StateVector>)>> {
        let sub_conf = 2 * self.cfg.c;
        let mut samples = Vec::with_capacity(self.cfg.c as usize);
        for _ in 0..self.cfg.c {
            match prepare_from_uniform_sub(bundle, sub_conf, rng, ledger)? {
                Some(state) => {
                    ledger.charge_projective_measurement();
                    let (index, _) = measure_register(&state, Register::I, rng);
                    samples.push(index);
                }
                None => return Ok(None),
            }
        }
        let coherent = if want_coherent {
            match prepare_from_uniform_sub(bundle, sub_conf, rng, ledger)? {
                Some(state) => Some(state),
                None => return Ok(None),
            }
        } else {
            None
        };
        Ok(Some((samples, coherent)))
    }

    fn first_step(
        &self,
        bundle: &WalkBundle,
        hint: Option<FirstStepHint>,
        want_coherent: bool,
        rng: &mut RngStream,
        ledger: &mut CostLedger,
    ) -> Result<(Vec<usize>, Option<StateVector>, PrepMethod, bool)> {
        let hint = hint.ok_or_else(|| Error::PreconditionViolated {
            what: "first step needs a cheap-preparation hint".into(),
        })?;
        let conf = self.cfg.conf();
        let target = self.cfg.c as usize + usize::from(want_coherent);
        let mut samples = Vec::with_capacity(self.cfg.c as usize);
        let mut coherent = None;
        let mut copies = 0usize;
        let method = match hint {
            FirstStepHint::KnownMode(_) => PrepMethod::Samples,
            FirstStepHint::UniformFidelity => PrepMethod::Uniform,
        };
        while copies < target {
            let mut produced = false;
            for _ in 0..COPY_ATTEMPT_BUDGET {
                let state = match hint {
                    FirstStepHint::KnownMode(mode) => {
                        let cap = quarter_power_cap(bundle.n());
                        seeded_rebuild_attempt(bundle, mode, cap, conf, rng, ledger)?
                    }
                    FirstStepHint::UniformFidelity => {
                        prepare_from_uniform_sub(bundle, 2 * self.cfg.c, rng, ledger)?
                    }
                };
                if let Some(post) = state {
                    if samples.len() < self.cfg.c as usize {
                        ledger.charge_projective_measurement();
                        let (index, _) = measure_register(&post, Register::I, rng);
                        samples.push(index);
                    } else {
                        coherent = Some(post);
                    }
                    copies += 1;
                    produced = true;
                    break;
                }
            }
            if !produced {
                if self.cfg.fallback {
                    let (samples, coherent) =
                        fallback_full_prepare(bundle, &self.cfg, want_coherent, rng, ledger)?;
                    return Ok((samples, coherent, PrepMethod::Fallback, true));
                }
                return Err(Error::StepFailure {
                    step: 1,
                    what: "first-step preparation exhausted its retry budget".into(),
                });
            }
        }
        Ok((samples, coherent, method, false))
    }

    /// Additional classical samples beyond the cached c: seed an oblivious
    /// rebuild from a cached sample of the current step and measure.
    fn draw_extras(
        &self,
        bundle: &WalkBundle,
        cache: &SampleCache,
        count: usize,
        rng: &mut RngStream,
        ledger: &mut CostLedger,
    ) -> Result<Vec<usize>> {
        let conf = self.cfg.conf();
        let cap = quarter_power_cap(bundle.n());
        let mut extras = Vec::with_capacity(count);
        for _ in 0..count {
            let mut produced = false;
            for _ in 0..COPY_ATTEMPT_BUDGET {
                let seed = cache.samples[rng.below(cache.samples.len())];
                if let Some(post) =
                    seeded_rebuild_attempt(bundle, seed, cap, conf, rng, ledger)?
                {
                    ledger.charge_projective_measurement();
                    let (index, _) = measure_register(&post, Register::I, rng);
                    extras.push(index);
                    produced = true;
                    break;
                }
            }
            if !produced {
                return Err(Error::StepFailure {
                    step: cache.step_index as usize,
                    what: "extra-sample draw exhausted its retry budget".into(),
                });
            }
        }
        Ok(extras)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::Distribution;
    use crate::sim::fidelity;

    fn rank_one_chain(pi: &[f64]) -> StochasticMatrix {
        let n = pi.len();
        let mut entries = vec![0.0f64; n * n];
        for j in 0..n {
            for i in 0..n {
                entries[i * n + j] = pi[i];
            }
        }
        StochasticMatrix::from_entries(n, entries).unwrap()
    }

    fn uniform_chain(n: usize) -> StochasticMatrix {
        rank_one_chain(&vec![1.0 / n as f64; n])
    }

    #[test]
    fn failure_bound_values() {
        let b1 = failure_bound(1).unwrap();
        assert!((b1.exact - 0.25).abs() < 1e-15);
        assert!((b1.ideal_bound - 0.5).abs() < 1e-15);
        assert!((b1.imperfect_bound - 1.0).abs() < 1e-15);

        let b3 = failure_bound(3).unwrap();
        assert!((b3.exact - 0.04663).abs() < 1e-3, "exact {}", b3.exact);
        assert!(b3.exact <= 0.125 + 1e-15);

        for c in 1..20 {
            let low = failure_bound(c).unwrap();
            let high = failure_bound(c + 1).unwrap();
            assert!(high.exact < low.exact);
            assert!(low.exact <= low.ideal_bound);
            assert!(low.ideal_bound <= low.imperfect_bound);
        }
        assert!(failure_bound(0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(ProtocolConfig::new(0, 0.9, 2.0, 4, true).is_err());
        assert!(ProtocolConfig::new(3, 0.0, 2.0, 4, true).is_err());
        assert!(ProtocolConfig::new(3, 1.1, 2.0, 4, true).is_err());
        assert!(ProtocolConfig::new(3, 0.9, 0.5, 4, true).is_err());
        assert!(ProtocolConfig::new(3, 0.9, 2.0, 1, true).is_err());
        assert!(ProtocolConfig::new(3, 0.9, 2.0, 4, true).is_ok());
    }

    #[test]
    fn uniform_sub_succeeds_directly_on_uniform_chain() {
        let bundle = build_walk(&uniform_chain(4)).unwrap();
        let mut rng = RngStream::new(7);
        let mut ledger = CostLedger::new();
        let out = prepare_from_uniform_sub(&bundle, 6, &mut rng, &mut ledger)
            .unwrap()
            .expect("uniform chain prepares directly");
        let f = fidelity(&out, &bundle.stationary_state().unwrap()).unwrap();
        assert!(f >= 1.0 - 1e-10);
        assert_eq!(ledger.total().amplification_iterations, 0);
    }

    #[test]
    fn uniform_sub_high_overlap_rarely_fails() {
        let bundle = build_walk(&rank_one_chain(&[0.7, 0.1, 0.1, 0.1])).unwrap();
        let f = Distribution::uniform(4)
            .fidelity_coherent(&bundle.pi)
            .unwrap();
        assert!((f - 0.8).abs() < 0.01, "overlap {f}");
        let conf = 4;
        let mut rng = RngStream::new(17);
        let mut ledger = CostLedger::new();
        let runs = 200;
        let mut hits = 0u32;
        for _ in 0..runs {
            if prepare_from_uniform_sub(&bundle, conf, &mut rng, &mut ledger)
                .unwrap()
                .is_some()
            {
                hits += 1;
            }
        }
        let rate = hits as f64 / runs as f64;
        assert!(rate >= 1.0 - 0.5f64.powi(conf as i32), "success rate {rate}");
    }

    #[test]
    fn uniform_sub_point_like_reports_failures_honestly() {
        let n = 16;
        let mut pi = vec![1e-6; n];
        pi[0] = 1.0 - 15.0 * 1e-6;
        let bundle = build_walk(&rank_one_chain(&pi)).unwrap();
        let conf = 3;
        let mut rng = RngStream::new(27);
        let mut ledger = CostLedger::new();
        let mut unsuccessful = 0u32;
        for _ in 0..300 {
            match prepare_from_uniform_sub(&bundle, conf, &mut rng, &mut ledger).unwrap() {
                Some(out) => {
                    let f = fidelity(&out, &bundle.stationary_state().unwrap()).unwrap();
                    assert!(f >= 1.0 - 0.5f64.powi(conf as i32), "fidelity {f}");
                }
                None => unsuccessful += 1,
            }
        }
        assert!(unsuccessful >= 1, "no unsuccessful outcomes observed");
    }

    #[test]
    fn samples_sub_constant_chain_accepts_every_rebuild() {
        let chain = rank_one_chain(&[0.4, 0.3, 0.2, 0.1]);
        let bundle_prev = build_walk(&chain).unwrap();
        let bundle_cur = build_walk(&chain).unwrap();
        let cfg = ProtocolConfig::new(4, 1.0, 2.0, 4, false).unwrap();
        let mut rng = RngStream::new(37);
        let mut ledger = CostLedger::new();
        let cache = SampleCache {
            step_index: 1,
            samples: vec![0, 0, 1, 2],
            method_used: PrepMethod::Samples,
        };
        let out = prepare_samples_sub(
            &bundle_prev,
            &bundle_cur,
            &cache,
            &cfg,
            false,
            &mut rng,
            &mut ledger,
        )
        .unwrap();
        assert_eq!(out.samples.len(), 4);
        assert_eq!(out.rebuilds, 4, "every rebuilt copy projects with certainty");
    }

    #[test]
    fn samples_sub_rebuild_rate_tracks_neighbor_fidelity() {
        let chain_prev =
            StochasticMatrix::from_rows(&[vec![0.9, 0.2], vec![0.1, 0.8]]).unwrap();
        let chain_cur =
            StochasticMatrix::from_rows(&[vec![0.48, 0.48], vec![0.52, 0.52]]).unwrap();
        let bundle_prev = build_walk(&chain_prev).unwrap();
        let bundle_cur = build_walk(&chain_cur).unwrap();
        let eta = fidelity(
            &bundle_prev.stationary_state().unwrap(),
            &bundle_cur.stationary_state().unwrap(),
        )
        .unwrap();
        assert!((eta - 0.81).abs() < 0.01, "neighbor fidelity {eta}");

        let cfg = ProtocolConfig::new(5, eta, 2.0, 2, false).unwrap();
        let mut rng = RngStream::new(47);
        let mut ledger = CostLedger::new();
        let mut rebuilds = 0u64;
        let mut copies = 0u64;
        for step in 0..80 {
            let cache = SampleCache {
                step_index: step,
                samples: vec![0, 0, 0, 0, 1],
                method_used: PrepMethod::Samples,
            };
            let out = prepare_samples_sub(
                &bundle_prev,
                &bundle_cur,
                &cache,
                &cfg,
                false,
                &mut rng,
                &mut ledger,
            )
            .unwrap();
            rebuilds += out.rebuilds;
            copies += out.samples.len() as u64;
        }
        let mean = rebuilds as f64 / copies as f64;
        let want = 1.0 / eta;
        assert!(
            (mean - want).abs() < 0.1 * want,
            "mean rebuilds per copy {mean} want {want}"
        );
    }

    #[test]
    fn samples_sub_switches_route_on_bad_cache() {
        let mut pi_prev = vec![1e-4; 4];
        pi_prev[0] = 1.0 - 3e-4;
        let bundle_prev = build_walk(&rank_one_chain(&pi_prev)).unwrap();
        let bundle_cur = build_walk(&rank_one_chain(&pi_prev)).unwrap();
        let cfg = ProtocolConfig::new(3, 0.9, 2.0, 4, false).unwrap();
        let mut rng = RngStream::new(57);
        let mut ledger = CostLedger::new();
        let cache = SampleCache {
            step_index: 2,
            samples: vec![3, 3, 3],
            method_used: PrepMethod::Samples,
        };
        let out = prepare_samples_sub(
            &bundle_prev,
            &bundle_cur,
            &cache,
            &cfg,
            false,
            &mut rng,
            &mut ledger,
        )
        .unwrap();
        assert_eq!(out.samples.len(), 3);
        assert!(
            out.rebuilds_via_uniform >= 1,
            "expected the uniform rebuild route to engage"
        );
    }

    #[test]
    fn first_step_requires_hint() {
        let cfg = ProtocolConfig::new(3, 0.9, 2.0, 4, false).unwrap();
        let mut run = ProtocolRun::new(cfg);
        let mut rng = RngStream::new(67);
        let mut ledger = CostLedger::new();
        let err = run
            .step(&uniform_chain(4), 1.0, None, 0, false, &mut rng, &mut ledger)
            .unwrap_err();
        assert!(matches!(err, Error::PreconditionViolated { .. }));
    }

    #[test]
    fn first_step_known_mode() {
        let cfg = ProtocolConfig::new(3, 0.9, 2.0, 2, false).unwrap();
        let mut run = ProtocolRun::new(cfg);
        let mut rng = RngStream::new(77);
        let mut ledger = CostLedger::new();
        let result = run
            .step(
                &rank_one_chain(&[0.99, 0.01]),
                1.0,
                Some(FirstStepHint::KnownMode(0)),
                0,
                false,
                &mut rng,
                &mut ledger,
            )
            .unwrap();
        assert_eq!(result.t, 1);
        assert!(!result.failed);
        assert_eq!(result.method, PrepMethod::Samples);
        assert_eq!(result.cache.samples.len(), 3);
        assert!(result.cache.samples.iter().all(|&s| s < 2));
        assert_eq!(run.bundle_count(), 1);
    }

    #[test]
    fn constant_sequence_steps_deterministically() {
        let cfg = ProtocolConfig::new(3, 1.0, 2.0, 4, false).unwrap();
        let chain = rank_one_chain(&[0.4, 0.3, 0.2, 0.1]);
        let run_once = |seed: u64| -> Vec<usize> {
            let mut run = ProtocolRun::new(cfg);
            let mut rng = RngStream::new(seed);
            let mut ledger = CostLedger::new();
            let mut outputs = Vec::new();
            for t in 0..3 {
                let hint = (t == 0).then_some(FirstStepHint::UniformFidelity);
                let result = run
                    .step(&chain, 1.0, hint, 2, false, &mut rng, &mut ledger)
                    .unwrap();
                assert!(!result.failed);
                assert_eq!(result.cache.samples.len(), 3);
                assert_eq!(result.extra_samples.len(), 2);
                assert!(result.cost.walk_calls > 0 || result.cost.projective_measurements > 0);
                outputs.push(result.output_sample);
                outputs.extend(&result.extra_samples);
                assert_eq!(run.bundle_count(), 1);
            }
            outputs
        };
        let a = run_once(87);
        let b = run_once(87);
        assert_eq!(a, b);
    }

    #[test]
    fn coherent_copy_on_request() {
        let cfg = ProtocolConfig::new(3, 1.0, 2.0, 2, false).unwrap();
        let chain = rank_one_chain(&[0.6, 0.4]);
        let mut run = ProtocolRun::new(cfg);
        let mut rng = RngStream::new(97);
        let mut ledger = CostLedger::new();
        let first = run
            .step(&chain, 1.0, Some(FirstStepHint::UniformFidelity), 0, true, &mut rng, &mut ledger)
            .unwrap();
        assert!(first.coherent_state_available);
        let bundle = build_walk(&chain).unwrap();
        let f = fidelity(
            first.coherent_state.as_ref().unwrap(),
            &bundle.stationary_state().unwrap(),
        )
        .unwrap();
        assert!(f >= 1.0 - 0.5f64.powi(4), "coherent fidelity {f}");

        let second = run
            .step(&chain, 1.0, None, 0, true, &mut rng, &mut ledger)
            .unwrap();
        assert!(second.coherent_state_available);
        assert_eq!(second.t, 2);
    }

    #[test]
    fn with_state_resumes_mid_sequence() {
        let cfg = ProtocolConfig::new(3, 1.0, 2.0, 4, false).unwrap();
        let chain = rank_one_chain(&[0.4, 0.3, 0.2, 0.1]);
        let cache = SampleCache {
            step_index: 5,
            samples: vec![0, 1, 0],
            method_used: PrepMethod::Uniform,
        };
        let mut run = ProtocolRun::with_state(cfg, &chain, cache, 1.0).unwrap();
        assert_eq!(run.bundle_count(), 1);
        let mut rng = RngStream::new(107);
        let mut ledger = CostLedger::new();
        let result = run
            .step(&chain, 1.0, None, 0, false, &mut rng, &mut ledger)
            .unwrap();
        assert_eq!(result.t, 6);
        assert!(!result.failed);
    }

    #[test]
    fn fallback_prepares_point_like_within_cap() {
        let n = 16;
        let mut pi = vec![1e-6; n];
        pi[0] = 1.0 - 15.0 * 1e-6;
        let bundle = build_walk(&rank_one_chain(&pi)).unwrap();
        let cfg = ProtocolConfig::new(3, 0.9, 2.0, n, true).unwrap();
        let mut rng = RngStream::new(117);
        let mut ledger = CostLedger::new();
        let (samples, coherent) =
            fallback_full_prepare(&bundle, &cfg, true, &mut rng, &mut ledger).unwrap();
        assert_eq!(samples.len(), 3);
        assert!(samples.iter().all(|&s| s < n));
        let f = fidelity(
            coherent.as_ref().unwrap(),
            &bundle.stationary_state().unwrap(),
        )
        .unwrap();
        assert!(f >= 1.0 - 0.5f64.powi(4));
    }

    #[test]
    fn fallback_uniform_chain_is_immediate() {
        let bundle = build_walk(&uniform_chain(4)).unwrap();
        let cfg = ProtocolConfig::new(2, 0.9, 2.0, 4, true).unwrap();
        let mut rng = RngStream::new(127);
        let mut ledger = CostLedger::new();
        let (samples, _) =
            fallback_full_prepare(&bundle, &cfg, false, &mut rng, &mut ledger).unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(ledger.total().amplification_iterations, 0);
    }
}
