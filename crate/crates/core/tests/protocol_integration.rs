use seqmix::chain_gen::{metropolis_chain, ChainSequence, SequenceFamily, SequenceSpec};
use seqmix::ledger::CostLedger;
use seqmix::markov::{Distribution, Regime, StochasticMatrix};
use seqmix::protocol::{FirstStepHint, PrepMethod, ProtocolConfig, ProtocolRun};
use seqmix::rng::RngStream;

fn hint_for(pi: &Distribution) -> FirstStepHint {
    let label = pi.classify_regime().unwrap();
    match label.regime {
        Regime::UniformAccessible => FirstStepHint::UniformFidelity,
        Regime::ModeAccessible => FirstStepHint::KnownMode(label.mode_index),
    }
}

fn empirical(n: usize, samples: &[usize]) -> Distribution {
    let mut counts = vec![0.0f64; n];
    for &s in samples {
        counts[s] += 1.0;
    }
    let total = samples.len() as f64;
    Distribution::from_probs(counts.into_iter().map(|c| c / total).collect()).unwrap()
}

fn gap_of(chain: &StochasticMatrix) -> f64 {
    chain.spectral_gap().unwrap().spectral_gap
}

#[test]
fn single_step_sampling_matches_stationary_law() {
    let energies = [0.0, 0.3, 0.6, 0.9];
    let chain = metropolis_chain(&energies, 1.0).unwrap();
    let pi = chain.stationary_distribution(1e-12).unwrap();
    let delta = gap_of(&chain);

    let cfg = ProtocolConfig::new(5, 0.9, 2.0, 4, true).unwrap();
    let mut run = ProtocolRun::new(cfg);
    let mut rng = RngStream::new(2026);
    let mut ledger = CostLedger::new();
    let result = run
        .step(&chain, delta, Some(hint_for(&pi)), 10_000, false, &mut rng, &mut ledger)
        .unwrap();

    let mut pool = result.cache.samples.clone();
    pool.extend(result.extra_samples.iter().copied());
    assert!(pool.len() >= 10_000);
    let tv = empirical(4, &pool).total_variation(&pi).unwrap();
    assert!(tv <= 0.03, "tv {tv} too large for {} samples", pool.len());
    assert!(!result.failed);
}

#[test]
fn constant_run_outputs_are_uncorrelated() {
    let energies = [0.0, 0.45, 0.2, 0.7, 0.05, 0.5, 0.3, 0.8];
    let chain = metropolis_chain(&energies, 0.8).unwrap();
    let pi = chain.stationary_distribution(1e-12).unwrap();
    let delta = gap_of(&chain);

    let cfg = ProtocolConfig::new(3, 0.9, 2.0, 8, true).unwrap();
    let mut run = ProtocolRun::new(cfg);
    let mut rng = RngStream::new(7);
    let mut ledger = CostLedger::new();

    let steps = 10_000usize;
    let mut outputs = Vec::with_capacity(steps);
    for t in 0..steps {
        let hint = if t == 0 { Some(hint_for(&pi)) } else { None };
        let result = run
            .step(&chain, delta, hint, 0, false, &mut rng, &mut ledger)
            .unwrap();
        assert!(run.bundle_count() <= 1);
        outputs.push(result.output_sample as f64);
    }

    let mean = outputs.iter().sum::<f64>() / steps as f64;
    let var: f64 = outputs.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    let cov: f64 = outputs
        .windows(2)
        .map(|w| (w[0] - mean) * (w[1] - mean))
        .sum::<f64>();
    let lag1 = cov / var;
    let sigma = 1.0 / (steps as f64).sqrt();
    assert!(
        lag1.abs() <= 4.0 * sigma,
        "lag-1 autocorrelation {lag1} exceeds 4 sigma = {}",
        4.0 * sigma
    );
}

#[test]
fn annealing_sequence_runs_clean() {
    let spec = SequenceSpec {
        family: SequenceFamily::MetropolisAnnealing,
        n: 8,
        length: 6,
        target_eta: 0.9,
        target_kappa: 2.0,
        temperature0: 2.0,
        cooling: 0.85,
        perturbation: 0.0,
        sparsity: 0.0,
    };
    let mut seq = ChainSequence::new(spec, 11).unwrap();
    let cfg = ProtocolConfig::new(4, 0.9, 2.0, 8, true).unwrap();
    let mut run = ProtocolRun::new(cfg);
    let mut rng = RngStream::new(401);
    let mut ledger = CostLedger::new();

    let mut steps_seen = 0;
    while let Some(step) = seq.next_step().unwrap() {
        let result = run
            .step(
                &step.chain,
                step.delta,
                step.hint,
                400,
                false,
                &mut rng,
                &mut ledger,
            )
            .unwrap();
        assert!(!result.failed, "step {} fell back", result.t);
        assert!(run.bundle_count() <= 1);
        assert!(matches!(result.method, PrepMethod::Uniform | PrepMethod::Samples));

        let pi = step.chain.stationary_distribution(1e-12).unwrap();
        let mut pool = result.cache.samples.clone();
        pool.extend(result.extra_samples.iter().copied());
        let tv = empirical(8, &pool).total_variation(&pi).unwrap();
        assert!(tv <= 0.13, "step {} tv {tv}", result.t);
        steps_seen += 1;
    }
    assert_eq!(steps_seen, 6);
}

#[test]
fn identical_seeds_reproduce_a_sequence_run() {
    let spec = SequenceSpec {
        family: SequenceFamily::PerturbedWeights,
        n: 6,
        length: 5,
        target_eta: 0.9,
        target_kappa: 2.0,
        temperature0: 1.0,
        cooling: 0.9,
        perturbation: 0.1,
        sparsity: 0.4,
    };
    let run_once = || {
        let mut seq = ChainSequence::new(spec.clone(), 19).unwrap();
        let cfg = ProtocolConfig::new(3, 0.9, 2.0, 6, true).unwrap();
        let mut run = ProtocolRun::new(cfg);
        let mut rng = RngStream::new(555);
        let mut ledger = CostLedger::new();
        let mut trace = Vec::new();
        while let Some(step) = seq.next_step().unwrap() {
            let result = run
                .step(&step.chain, step.delta, step.hint, 3, false, &mut rng, &mut ledger)
                .unwrap();
            trace.push((
                result.t,
                result.output_sample,
                result.cache.samples.clone(),
                result.extra_samples.clone(),
                result.method,
                result.cost.walk_calls,
                result.cost.diffusion_calls,
            ));
        }
        trace
    };
    let a = run_once();
    let b = run_once();
    assert_eq!(a, b);
}
