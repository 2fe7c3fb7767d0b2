//! Batch experiment execution.
//!
//! Trials fan out over threads; determinism comes from addressing every
//! trial's randomness as `RngStream::with_stream(seed, id)` with an id
//! derived from its position, then sorting rows by position. Identical
//! configs therefore produce byte-identical record files regardless of
//! thread scheduling.

use rayon::prelude::*;

use seqmix::chain_gen::{
    gap_family, random_distribution_varied, random_reversible_chain, scaling_family,
    ChainSequence, SequenceSpec, SequenceStep,
};
use seqmix::ledger::CostLedger;
use seqmix::markov::{Regime, StochasticMatrix};
use seqmix::protocol::{FirstStepHint, ProtocolConfig, ProtocolRun};
use seqmix::rng::RngStream;
use seqmix::walk::{build_walk, busy_basis, eigenphases_reported};
use seqmix::{linalg, Result, StateVector};

use crate::config::{ExperimentConfig, RunMode};
use crate::records::{Oracle, OracleStep, Record};

pub struct RunOutput {
    pub records: Vec<Record>,
    pub oracle: Oracle,
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    match cfg.mode {
        RunMode::Protocol => run_protocol(cfg),
        RunMode::Scaling => run_scaling(cfg),
        RunMode::LemmaSuite => run_lemma_suite(cfg),
        RunMode::SpectralSuite => run_spectral_suite(cfg),
    }
}

fn sequence_spec(cfg: &ExperimentConfig) -> SequenceSpec {
    SequenceSpec {
        family: cfg.family,
        n: cfg.n,
        length: cfg.steps,
        target_eta: cfg.eta,
        target_kappa: cfg.kappa,
        temperature0: cfg.temperature0,
        cooling: cfg.cooling,
        perturbation: cfg.perturbation,
        sparsity: cfg.sparsity,
    }
}

/// The chain sequence a protocol run walks, generated up front on rng
/// stream 0 and shared by every trial.
pub fn materialize_sequence(cfg: &ExperimentConfig) -> Result<Vec<SequenceStep>> {
    let mut seq = ChainSequence::new(sequence_spec(cfg), cfg.seed)?;
    let mut steps = Vec::new();
    while let Some(step) = seq.next_step()? {
        steps.push(step);
    }
    Ok(steps)
}

fn stationary_probs(chain: &StochasticMatrix) -> Result<Vec<f64>> {
    let pi = chain.stationary_distribution(1e-12)?;
    Ok((0..chain.n()).map(|i| pi.get(i)).collect())
}

fn run_protocol(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let steps = materialize_sequence(cfg)?;
    let mut oracle_steps = Vec::with_capacity(steps.len());
    for (i, step) in steps.iter().enumerate() {
        oracle_steps.push(OracleStep {
            step: (i + 1) as u64,
            n: cfg.n,
            delta: step.delta,
            pi: stationary_probs(&step.chain)?,
        });
    }
    let trial_ids: Vec<u64> = (0..cfg.trials as u64).collect();
    let mut per_trial: Vec<(u64, Vec<Record>)> = trial_ids
        .par_iter()
        .map(|&trial| protocol_trial(cfg, &steps, trial).map(|rows| (trial, rows)))
        .collect::<Result<_>>()?;
    per_trial.sort_by_key(|(trial, _)| *trial);
    let records = per_trial.into_iter().flat_map(|(_, rows)| rows).collect();
    Ok(RunOutput {
        records,
        oracle: Oracle { mode: cfg.mode.as_str().into(), steps: oracle_steps },
    })
}

fn protocol_trial(
    cfg: &ExperimentConfig,
    steps: &[SequenceStep],
    trial: u64,
) -> Result<Vec<Record>> {
    let mut rng = RngStream::with_stream(cfg.seed, trial + 1);
    let pcfg = ProtocolConfig::new(cfg.c, cfg.eta, cfg.kappa, cfg.n, cfg.fallback)?;
    let mut run = ProtocolRun::new(pcfg);
    let mut ledger = CostLedger::new();
    let mut rows = Vec::new();
    for (i, step) in steps.iter().enumerate() {
        let result = run.step(
            &step.chain,
            step.delta,
            step.hint,
            cfg.extra_samples,
            false,
            &mut rng,
            &mut ledger,
        )?;
        let mut samples = result.cache.samples.clone();
        samples.extend(result.extra_samples.iter().copied());
        for (k, &sample) in samples.iter().enumerate() {
            rows.push(Record {
                step: (i + 1) as u64,
                trial,
                sample,
                method: result.method.as_str().to_string(),
                walk_calls: if k == 0 { result.cost.walk_calls } else { 0 },
                diffusion_calls: if k == 0 { result.cost.diffusion_calls } else { 0 },
                failed: result.failed,
                delta: step.delta,
                n: cfg.n,
            });
        }
    }
    Ok(rows)
}

struct Member {
    step: u64,
    n: usize,
    delta: f64,
    chain: StochasticMatrix,
}

fn scaling_members(cfg: &ExperimentConfig) -> Result<Vec<Member>> {
    if cfg.delta_list.len() >= 2 {
        Ok(gap_family(cfg.n, &cfg.delta_list)?
            .into_iter()
            .enumerate()
            .map(|(i, (delta, chain))| Member {
                step: (i + 1) as u64,
                n: cfg.n,
                delta,
                chain,
            })
            .collect())
    } else {
        Ok(scaling_family(&cfg.n_list, cfg.delta)?
            .into_iter()
            .enumerate()
            .map(|(i, (n, chain))| Member { step: (i + 1) as u64, n, delta: cfg.delta, chain })
            .collect())
    }
}

fn run_scaling(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let members = scaling_members(cfg)?;
    let mut oracle_steps = Vec::with_capacity(members.len());
    for member in &members {
        oracle_steps.push(OracleStep {
            step: member.step,
            n: member.n,
            delta: member.delta,
            pi: stationary_probs(&member.chain)?,
        });
    }
    let jobs: Vec<(usize, u64)> = (0..members.len())
        .flat_map(|mi| (0..cfg.trials as u64).map(move |trial| (mi, trial)))
        .collect();
    let mut rows: Vec<Record> = jobs
        .par_iter()
        .map(|&(mi, trial)| scaling_trial(cfg, &members[mi], mi, trial))
        .collect::<Result<_>>()?;
    rows.sort_by_key(|r| (r.step, r.trial));
    Ok(RunOutput {
        records: rows,
        oracle: Oracle { mode: cfg.mode.as_str().into(), steps: oracle_steps },
    })
}

/// One cold preparation of the member's stationary state from its known
/// mode, so cost rows measure a single protocol step.
fn scaling_trial(
    cfg: &ExperimentConfig,
    member: &Member,
    member_index: usize,
    trial: u64,
) -> Result<Record> {
    let stream = (member_index as u64) * cfg.trials as u64 + trial + 1;
    let mut rng = RngStream::with_stream(cfg.seed, stream);
    let pi = member.chain.stationary_distribution(1e-12)?;
    let hint = FirstStepHint::KnownMode(pi.mode().0);
    let pcfg = ProtocolConfig::new(cfg.c, cfg.eta, cfg.kappa, member.n, cfg.fallback)?;
    let mut run = ProtocolRun::new(pcfg);
    let mut ledger = CostLedger::new();
    let result = run.step(
        &member.chain,
        member.delta,
        Some(hint),
        0,
        false,
        &mut rng,
        &mut ledger,
    )?;
    Ok(Record {
        step: member.step,
        trial,
        sample: result.output_sample,
        method: result.method.as_str().to_string(),
        walk_calls: result.cost.walk_calls,
        diffusion_calls: result.cost.diffusion_calls,
        failed: result.failed,
        delta: member.delta,
        n: member.n,
    })
}

fn route_name(regime: Regime) -> &'static str {
    match regime {
        Regime::UniformAccessible => "uniform",
        Regime::ModeAccessible => "samples",
    }
}

/// Random distributions classified into their guaranteed preparation
/// route. A row records the route in `method`, the fidelity to uniform in
/// `delta`, and the mode index in `sample`; `failed` marks a distribution
/// that fit neither route, which must never happen.
fn run_lemma_suite(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let jobs: Vec<(usize, u64)> = (0..cfg.n_list.len())
        .flat_map(|ni| (0..cfg.trials as u64).map(move |trial| (ni, trial)))
        .collect();
    let mut rows: Vec<Record> = jobs
        .par_iter()
        .map(|&(ni, trial)| -> Result<Record> {
            let n = cfg.n_list[ni];
            let stream = (ni as u64) * cfg.trials as u64 + trial + 1;
            let mut rng = RngStream::with_stream(cfg.seed, stream);
            let d = random_distribution_varied(n, &mut rng)?;
            let row = match d.classify_regime() {
                Ok(label) => Record {
                    step: (ni + 1) as u64,
                    trial,
                    sample: label.mode_index,
                    method: route_name(label.regime).to_string(),
                    walk_calls: 0,
                    diffusion_calls: 0,
                    failed: false,
                    delta: label.fidelity_to_uniform,
                    n,
                },
                Err(_) => Record {
                    step: (ni + 1) as u64,
                    trial,
                    sample: d.mode().0,
                    method: "samples".to_string(),
                    walk_calls: 0,
                    diffusion_calls: 0,
                    failed: true,
                    delta: d.fidelity_uniform(),
                    n,
                },
            };
            Ok(row)
        })
        .collect::<Result<_>>()?;
    rows.sort_by_key(|r| (r.step, r.trial));
    let oracle_steps = cfg
        .n_list
        .iter()
        .enumerate()
        .map(|(ni, &n)| OracleStep {
            step: (ni + 1) as u64,
            n,
            delta: 1.0 / (n as f64).sqrt(),
            pi: Vec::new(),
        })
        .collect();
    Ok(RunOutput {
        records: rows,
        oracle: Oracle { mode: cfg.mode.as_str().into(), steps: oracle_steps },
    })
}

/// Worst deviation across the three walk checks for one random chain:
/// eigenphase correspondence, stationary-state invariance, and identity
/// off the busy subspace.
fn spectral_deviation(chain: &StochasticMatrix, rng: &mut RngStream) -> Result<f64> {
    let bundle = build_walk(chain)?;
    let n = chain.n();
    let eigs = chain.spectral_gap()?.eigenvalues;

    let mut expected = vec![0.0f64];
    for &lambda in &eigs[..n - 1] {
        let theta = lambda.clamp(-1.0, 1.0).acos();
        expected.push(theta);
        expected.push(-theta);
    }
    expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let reported = eigenphases_reported(&bundle)?;
    let mut worst = 0.0f64;
    if reported.len() != expected.len() {
        return Ok(f64::INFINITY);
    }
    for (got, want) in reported.iter().zip(&expected) {
        worst = worst.max((got - want).abs());
    }

    let stationary = bundle.stationary_state()?;
    let image = bundle.w.apply(&stationary)?;
    for (a, b) in image.amps().iter().zip(stationary.amps()) {
        worst = worst.max((a - b).norm());
    }

    let basis = busy_basis(&bundle);
    let raw: Vec<f64> = (0..n * n).map(|_| rng.normal()).collect();
    let mut perp = raw.clone();
    for b in &basis {
        let coeff: f64 = b.iter().zip(&raw).map(|(x, y)| x * y).sum();
        for (p, bv) in perp.iter_mut().zip(b) {
            *p -= coeff * bv;
        }
    }
    let norm = linalg::norm(&perp);
    if norm > 1e-6 {
        for v in &mut perp {
            *v /= norm;
        }
        let s = StateVector::from_real_walk(n, &perp)?;
        let out = bundle.w.apply(&s)?;
        for (a, b) in out.amps().iter().zip(s.amps()) {
            worst = worst.max((a - b).norm());
        }
    }
    Ok(worst)
}

/// Random reversible chains pushed through the walk checks. A row's
/// `delta` holds the chain's spectral gap and `failed` marks any check
/// deviating past 1e-8.
fn run_spectral_suite(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let jobs: Vec<(usize, u64)> = (0..cfg.n_list.len())
        .flat_map(|ni| (0..cfg.trials as u64).map(move |trial| (ni, trial)))
        .collect();
    let mut rows: Vec<Record> = jobs
        .par_iter()
        .map(|&(ni, trial)| -> Result<Record> {
            let n = cfg.n_list[ni];
            let stream = (ni as u64) * cfg.trials as u64 + trial + 1;
            let mut rng = RngStream::with_stream(cfg.seed, stream);
            let chain = random_reversible_chain(n, &mut rng, cfg.sparsity)?;
            let deviation = spectral_deviation(&chain, &mut rng)?;
            Ok(Record {
                step: (ni + 1) as u64,
                trial,
                sample: 0,
                method: "uniform".to_string(),
                walk_calls: 0,
                diffusion_calls: 0,
                failed: deviation > 1e-8,
                delta: chain.spectral_gap()?.spectral_gap,
                n,
            })
        })
        .collect::<Result<_>>()?;
    rows.sort_by_key(|r| (r.step, r.trial));
    let oracle_steps = cfg
        .n_list
        .iter()
        .enumerate()
        .map(|(ni, &n)| OracleStep { step: (ni + 1) as u64, n, delta: 0.0, pi: Vec::new() })
        .collect();
    Ok(RunOutput {
        records: rows,
        oracle: Oracle { mode: cfg.mode.as_str().into(), steps: oracle_steps },
    })
}
