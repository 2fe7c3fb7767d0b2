//! Generators of reversible chains and slowly evolving chain sequences.
//!
//! Random chains are random walks on weighted connected graphs with a
//! balancing self-loop at every vertex, which keeps the transition
//! spectrum nonnegative so that reported walk eigenphases match the
//! arccos correspondence. Sequences adapt their step size until
//! consecutive stationary states stay close and consecutive gaps stay
//! multiplicatively close.

use crate::error::{Error, Result};
use crate::markov::{Distribution, StochasticMatrix, extremal_distribution};
use crate::protocol::FirstStepHint;
use crate::rng::RngStream;

/// How a sequence evolves from one chain to the next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceFamily {
    ConstantChain,
    MetropolisAnnealing,
    PerturbedWeights,
}

/// Parameters of a chain sequence.
#[derive(Debug, Clone)]
pub struct SequenceSpec {
    pub family: SequenceFamily,
    pub n: usize,
    pub length: usize,
    /// Required fidelity between consecutive stationary distributions.
    pub target_eta: f64,
    /// Required multiplicative closeness of consecutive spectral gaps.
    pub target_kappa: f64,
    /// Initial temperature (annealing family).
    pub temperature0: f64,
    /// Geometric cooling factor in (0,1) (annealing family).
    pub cooling: f64,
    /// Relative weight perturbation per step (perturbed-weights family).
    pub perturbation: f64,
    /// Probability of each non-ring chord in the random graph.
    pub sparsity: f64,
}

impl SequenceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::TooFewStates { need: 2, got: self.n });
        }
        if self.length == 0 {
            return Err(Error::DomainError { what: "sequence length must be positive".into() });
        }
        if !(self.target_eta > 0.0 && self.target_eta <= 1.0) {
            return Err(Error::DomainError {
                what: format!("target fidelity {} outside (0,1]", self.target_eta),
            });
        }
        if !(self.target_kappa >= 1.0) {
            return Err(Error::DomainError {
                what: format!("gap closeness {} below 1", self.target_kappa),
            });
        }
        if self.family == SequenceFamily::MetropolisAnnealing {
            if !(self.temperature0 > 0.0) {
                return Err(Error::DomainError { what: "temperature must be positive".into() });
            }
            if !(self.cooling > 0.0 && self.cooling < 1.0) {
                return Err(Error::DomainError {
                    what: "cooling factor must lie in (0,1)".into(),
                });
            }
        }
        if self.family == SequenceFamily::PerturbedWeights
            && !(self.perturbation > 0.0 && self.perturbation < 1.0)
        {
            return Err(Error::DomainError { what: "perturbation must lie in (0,1)".into() });
        }
        if !(0.0..=1.0).contains(&self.sparsity) {
            return Err(Error::DomainError { what: "sparsity must lie in [0,1]".into() });
        }
        Ok(())
    }
}

/// One emitted element of a chain sequence.
#[derive(Debug, Clone)]
pub struct SequenceStep {
    pub chain: StochasticMatrix,
    pub delta: f64,
    pub hint: Option<FirstStepHint>,
}

fn evaluate_chain(
    chain: Result<StochasticMatrix>,
) -> Result<(StochasticMatrix, Distribution, f64)> {
    let chain = chain?;
    let pi = chain.stationary_distribution(1e-12)?;
    let delta = chain.spectral_gap()?.spectral_gap;
    Ok((chain, pi, delta))
}

fn chain_from_weights(n: usize, w: &[f64]) -> Result<StochasticMatrix> {
    let mut entries = vec![0.0f64; n * n];
    for j in 0..n {
        let total: f64 = (0..n).map(|i| w[i * n + j]).sum();
        for i in 0..n {
            entries[i * n + j] = w[i * n + j] / total;
        }
    }
    StochasticMatrix::from_entries(n, entries)
}

/// Symmetric edge weights of a connected graph: a ring backbone, each
/// chord present with probability `sparsity`, and a balancing self-loop
/// equal to the incident edge weight, which pins every holding
/// probability at 1/2 and keeps the chain spectrum nonnegative.
fn random_graph_weights(n: usize, rng: &mut RngStream, sparsity: f64) -> Vec<f64> {
    let mut w = vec![0.0f64; n * n];
    let connect = |w: &mut Vec<f64>, i: usize, j: usize, rng: &mut RngStream| {
        let weight = 0.5 + rng.uniform();
        w[i * n + j] = weight;
        w[j * n + i] = weight;
    };
    for i in 0..n {
        let j = (i + 1) % n;
        if i < j || n == 2 {
            if w[i * n + j] == 0.0 {
                connect(&mut w, i, j, rng);
            }
        }
    }
    for i in 0..n {
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if rng.bernoulli(sparsity) {
                connect(&mut w, i, j, rng);
            }
        }
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| w[i * n + j]).sum();
        w[i * n + i] = off;
    }
    w
}

/// Random walk on a random weighted connected graph. Reversible by
/// construction with stationary weight proportional to vertex degree; the
/// ring backbone guarantees connectivity, so no disconnected chain is
/// ever returned.
pub fn random_reversible_chain(
    n: usize,
    rng: &mut RngStream,
    sparsity: f64,
) -> Result<StochasticMatrix> {
    if n < 2 {
        return Err(Error::TooFewStates { need: 2, got: n });
    }
    let w = random_graph_weights(n, rng, sparsity);
    chain_from_weights(n, &w)
}

fn proposal_neighbors(n: usize) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    let add = |adj: &mut Vec<Vec<usize>>, i: usize, j: usize| {
        if !adj[i].contains(&j) {
            adj[i].push(j);
            adj[j].push(i);
        }
    };
    for i in 0..n {
        add(&mut adj, i, (i + 1) % n);
    }
    if n >= 4 {
        add(&mut adj, 0, n / 2);
    }
    adj
}

/// Metropolis chain on a fixed ring-plus-chord proposal graph with a
/// symmetric proposal and acceptance min(1, exp(-(E_i - E_j)/T)), made
/// half-lazy so the spectrum is nonnegative. The stationary distribution
/// is the Gibbs distribution of the energies at temperature `t`.
pub fn metropolis_chain(energies: &[f64], temperature: f64) -> Result<StochasticMatrix> {
    let n = energies.len();
    if n < 2 {
        return Err(Error::TooFewStates { need: 2, got: n });
    }
    if !(temperature > 0.0) {
        return Err(Error::DomainError { what: "temperature must be positive".into() });
    }
    let adj = proposal_neighbors(n);
    let d_max = adj.iter().map(Vec::len).max().unwrap() as f64;
    let mut entries = vec![0.0f64; n * n];
    for j in 0..n {
        let mut stay = 1.0f64;
        for &i in &adj[j] {
            let accept = (-(energies[i] - energies[j]) / temperature).exp().min(1.0);
            let p = accept / d_max;
            entries[i * n + j] = p;
            stay -= p;
        }
        entries[j * n + j] = stay;
    }
    for j in 0..n {
        for i in 0..n {
            entries[i * n + j] *= 0.5;
        }
        entries[j * n + j] += 0.5;
    }
    StochasticMatrix::from_entries(n, entries)
}

/// A random single-valley landscape on the proposal ring: energy grows
/// with ring distance from a random minimum by random increments, scaled
/// to unit spread. Uphill moves along the ring then cost at most one
/// increment, so the spectral gap shrinks smoothly as the temperature
/// drops and neighboring chains in a cooling schedule keep
/// multiplicatively close gaps.
pub fn valley_landscape(n: usize, rng: &mut RngStream) -> Vec<f64> {
    let valley = rng.below(n);
    let mut energies = vec![0.0f64; n];
    let arm = |range: Vec<usize>, rng: &mut RngStream, energies: &mut Vec<f64>| {
        let mut level = 0.0f64;
        for pos in range {
            level += 0.5 + rng.uniform();
            energies[pos] = level;
        }
    };
    arm(
        (1..=n / 2).map(|d| (valley + d) % n).collect(),
        rng,
        &mut energies,
    );
    arm(
        (1..=(n - 1) / 2).map(|d| (valley + n - d) % n).collect(),
        rng,
        &mut energies,
    );
    let top = energies.iter().cloned().fold(0.0f64, f64::max);
    for e in &mut energies {
        *e /= top;
    }
    energies
}

/// The Gibbs distribution of an energy landscape at temperature `t`.
pub fn gibbs_distribution(energies: &[f64], temperature: f64) -> Result<Distribution> {
    if !(temperature > 0.0) {
        return Err(Error::DomainError { what: "temperature must be positive".into() });
    }
    let min = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = energies
        .iter()
        .map(|e| (-(e - min) / temperature).exp())
        .collect();
    let z: f64 = weights.iter().sum();
    Distribution::from_probs(weights.into_iter().map(|w| w / z).collect())
}

/// The chain whose every column equals `pi`: stationary distribution
/// exactly `pi`, reversible, spectral gap 1.
pub fn rank_one_chain(pi: &Distribution) -> Result<StochasticMatrix> {
    let n = pi.n();
    let mut entries = vec![0.0f64; n * n];
    for j in 0..n {
        for i in 0..n {
            entries[i * n + j] = pi.get(i);
        }
    }
    StochasticMatrix::from_entries(n, entries)
}

/// Shrink a chain's spectral gap to exactly `delta_target` by mixing the
/// half-lazy chain with the identity. Stationary distribution and
/// reversibility are preserved and the spectrum stays nonnegative.
pub fn lazify_to_gap(chain: &StochasticMatrix, delta_target: f64) -> Result<StochasticMatrix> {
    let n = chain.n();
    let summary = chain.spectral_gap()?;
    let lambda_max = summary
        .eigenvalues
        .iter()
        .rev()
        .skip(1)
        .next()
        .copied()
        .unwrap_or(0.0);
    let half_gap = (1.0 - lambda_max) / 2.0;
    if !(delta_target > 0.0 && delta_target <= half_gap) {
        return Err(Error::DomainError {
            what: format!(
                "target gap {delta_target} outside (0, {half_gap}] reachable by lazification"
            ),
        });
    }
    let theta = 1.0 - delta_target / half_gap;
    let mut entries = vec![0.0f64; n * n];
    for j in 0..n {
        for i in 0..n {
            let half = 0.5 * chain.p(i, j) + if i == j { 0.5 } else { 0.0 };
            entries[i * n + j] = (1.0 - theta) * half + if i == j { theta } else { 0.0 };
        }
    }
    StochasticMatrix::from_entries(n, entries)
}

/// A distribution sitting on the boundary between the two preparation
/// regimes: the extremal shape at p_max = 1/sqrt(N), blended with a touch
/// of uniform so every entry is positive.
pub fn boundary_distribution(n: usize) -> Result<Distribution> {
    let alpha = 1e-10;
    let extremal = extremal_distribution(1.0 / (n as f64).sqrt(), n)?;
    let probs: Vec<f64> = (0..n)
        .map(|i| (1.0 - alpha) * extremal.get(i) + alpha / n as f64)
        .collect();
    Distribution::from_probs(probs)
}

/// Chains over growing state counts with the spectral gap pinned, for
/// cost-versus-size scaling runs.
pub fn scaling_family(n_list: &[usize], delta: f64) -> Result<Vec<(usize, StochasticMatrix)>> {
    n_list
        .iter()
        .map(|&n| {
            let chain = lazify_to_gap(&rank_one_chain(&boundary_distribution(n)?)?, delta)?;
            Ok((n, chain))
        })
        .collect()
}

/// Chains at fixed size with the spectral gap swept over `delta_list`,
/// for cost-versus-gap scaling runs.
pub fn gap_family(n: usize, delta_list: &[f64]) -> Result<Vec<(f64, StochasticMatrix)>> {
    delta_list
        .iter()
        .map(|&delta| {
            let chain = lazify_to_gap(&rank_one_chain(&boundary_distribution(n)?)?, delta)?;
            Ok((delta, chain))
        })
        .collect()
}

/// A random distribution drawn from one of several shape families, from
/// near-uniform to near-point-mass, for property sweeps.
pub fn random_distribution_varied(n: usize, rng: &mut RngStream) -> Result<Distribution> {
    let style = rng.below(4);
    let mut probs = vec![0.0f64; n];
    match style {
        0 => {
            for p in probs.iter_mut() {
                *p = -(1.0 - rng.uniform()).ln();
            }
        }
        1 => {
            let spike = rng.below(n);
            let weight = 0.3 + 0.7 * rng.uniform();
            for (i, p) in probs.iter_mut().enumerate() {
                *p = if i == spike { weight } else { (1.0 - weight) / (n - 1) as f64 };
            }
        }
        2 => {
            let rate = 0.2 + 3.0 * rng.uniform();
            for (i, p) in probs.iter_mut().enumerate() {
                *p = (-rate * i as f64 / n as f64).exp();
            }
        }
        _ => {
            for p in probs.iter_mut() {
                *p = 1.0 + 0.2 * rng.uniform();
            }
        }
    }
    let total: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p = (*p / total).max(1e-12);
    }
    let total: f64 = probs.iter().sum();
    Distribution::from_probs(probs.into_iter().map(|p| p / total).collect())
}

const MAX_STEP_SHRINKS: u32 = 30;
const MIN_ANNEALING_STEP: f64 = 1e-6;
const MIN_PERTURBATION_SCALE: f64 = 1e-9;

enum FamilyState {
    Constant,
    Annealing { energies: Vec<f64>, temperature: f64, factor: f64 },
    Perturbed { weights: Vec<f64>, scale: f64 },
}

/// Stream of chains satisfying the sequence's closeness targets, checked
/// at generation time against the classical oracles.
pub struct ChainSequence {
    spec: SequenceSpec,
    rng: RngStream,
    state: FamilyState,
    current: StochasticMatrix,
    current_pi: Distribution,
    current_delta: f64,
    emitted: usize,
}

impl ChainSequence {
    pub fn new(spec: SequenceSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = RngStream::new(seed);
        let n = spec.n;
        let (state, chain) = match spec.family {
            SequenceFamily::ConstantChain => {
                (FamilyState::Constant, random_reversible_chain(n, &mut rng, spec.sparsity)?)
            }
            SequenceFamily::MetropolisAnnealing => {
                let energies = valley_landscape(n, &mut rng);
                let chain = metropolis_chain(&energies, spec.temperature0)?;
                (
                    FamilyState::Annealing {
                        energies,
                        temperature: spec.temperature0,
                        factor: spec.cooling,
                    },
                    chain,
                )
            }
            SequenceFamily::PerturbedWeights => {
                let weights = random_graph_weights(n, &mut rng, spec.sparsity);
                let chain = chain_from_weights(n, &weights)?;
                (FamilyState::Perturbed { weights, scale: spec.perturbation }, chain)
            }
        };
        let pi = chain.stationary_distribution(1e-12)?;
        let delta = chain.spectral_gap()?.spectral_gap;
        Ok(Self {
            spec,
            rng,
            state,
            current: chain,
            current_pi: pi,
            current_delta: delta,
            emitted: 0,
        })
    }

    pub fn spec(&self) -> &SequenceSpec {
        &self.spec
    }

    fn first_hint(&self) -> FirstStepHint {
        let n = self.spec.n;
        let uniform_overlap = Distribution::uniform(n)
            .fidelity_coherent(&self.current_pi)
            .unwrap_or(0.0);
        if uniform_overlap >= 1.0 / (n as f64).sqrt() {
            FirstStepHint::UniformFidelity
        } else {
            FirstStepHint::KnownMode(self.current_pi.mode().0)
        }
    }

    /// Emit the next chain, or `None` once the declared length is done.
    pub fn next_step(&mut self) -> Result<Option<SequenceStep>> {
        if self.emitted >= self.spec.length {
            return Ok(None);
        }
        if self.emitted > 0 {
            self.advance()?;
        }
        let hint = (self.emitted == 0).then(|| self.first_hint());
        self.emitted += 1;
        Ok(Some(SequenceStep {
            chain: self.current.clone(),
            delta: self.current_delta,
            hint,
        }))
    }

    fn advance(&mut self) -> Result<()> {
        let eta = self.spec.target_eta;
        let kappa = self.spec.target_kappa;
        match &mut self.state {
            FamilyState::Constant => Ok(()),
            FamilyState::Annealing { energies, temperature, factor } => {
                let mut trial = *factor;
                for _ in 0..MAX_STEP_SHRINKS {
                    if 1.0 - trial < MIN_ANNEALING_STEP {
                        return Err(Error::StepSizeUnderflow);
                    }
                    let t_next = *temperature * trial;
                    // A trial chain that fails validation (numerically
                    // degenerate at very low temperature) counts as a
                    // rejected step, like a missed eta or kappa target.
                    if let Ok((chain, pi, delta)) = evaluate_chain(metropolis_chain(energies, t_next)) {
                        let fid = self.current_pi.fidelity_coherent(&pi)?;
                        let gaps_close = delta >= self.current_delta / kappa
                            && delta <= self.current_delta * kappa;
                        if fid >= eta && gaps_close {
                            *temperature = t_next;
                            self.current = chain;
                            self.current_pi = pi;
                            self.current_delta = delta;
                            return Ok(());
                        }
                    }
                    trial = trial.sqrt();
                }
                Err(Error::StepSizeUnderflow)
            }
            FamilyState::Perturbed { weights, scale } => {
                let n = self.spec.n;
                let mut trial = *scale;
                for _ in 0..MAX_STEP_SHRINKS {
                    if trial < MIN_PERTURBATION_SCALE {
                        return Err(Error::StepSizeUnderflow);
                    }
                    let mut next = weights.clone();
                    for i in 0..n {
                        for j in i..n {
                            if next[i * n + j] > 0.0 && i != j {
                                let u = 2.0 * self.rng.uniform() - 1.0;
                                let w = next[i * n + j] * (1.0 + trial * u);
                                next[i * n + j] = w;
                                next[j * n + i] = w;
                            }
                        }
                    }
                    for i in 0..n {
                        let off: f64 =
                            (0..n).filter(|&j| j != i).map(|j| next[i * n + j]).sum();
                        next[i * n + i] = off;
                    }
                    if let Ok((chain, pi, delta)) = evaluate_chain(chain_from_weights(n, &next)) {
                        let fid = self.current_pi.fidelity_coherent(&pi)?;
                        let gaps_close = delta >= self.current_delta / kappa
                            && delta <= self.current_delta * kappa;
                        if fid >= eta && gaps_close {
                            *weights = next;
                            self.current = chain;
                            self.current_pi = pi;
                            self.current_delta = delta;
                            return Ok(());
                        }
                    }
                    trial /= 2.0;
                }
                Err(Error::StepSizeUnderflow)
            }
        }
    }
}

/// Stream-interface alias for pulling the next element of a sequence.
pub fn next_in_sequence(sequence: &mut ChainSequence) -> Result<Option<SequenceStep>> {
    sequence.next_step()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::Regime;
    use crate::tol;

    fn spec(family: SequenceFamily, n: usize, length: usize) -> SequenceSpec {
        SequenceSpec {
            family,
            n,
            length,
            target_eta: 0.9,
            target_kappa: 2.0,
            temperature0: 1.0,
            cooling: 0.83,
            perturbation: 0.05,
            sparsity: 0.5,
        }
    }

    #[test]
    fn random_chain_two_states() {
        let mut rng = RngStream::new(3);
        let p = random_reversible_chain(2, &mut rng, 0.5).unwrap();
        let pi = p.stationary_distribution(1e-12).unwrap();
        assert!(p.is_reversible(&pi, tol::REVERSIBILITY));
        assert!(p.p(1, 0) > 0.0 && p.p(1, 0) < 1.0);
        assert!(p.p(0, 1) > 0.0 && p.p(0, 1) < 1.0);
    }

    #[test]
    fn random_chain_dense_is_reversible_with_nonnegative_spectrum() {
        let mut rng = RngStream::new(13);
        for _ in 0..10 {
            let p = random_reversible_chain(8, &mut rng, 1.0).unwrap();
            let pi = p.stationary_distribution(1e-12).unwrap();
            assert!(p.is_reversible(&pi, 1e-10));
            assert!(p.is_primitive());
            let summary = p.spectral_gap().unwrap();
            assert!(
                summary.eigenvalues.iter().all(|&l| l >= -1e-12),
                "negative eigenvalue in {:?}",
                summary.eigenvalues
            );
        }
    }

    #[test]
    fn random_chain_ring_only_is_connected() {
        let mut rng = RngStream::new(23);
        let p = random_reversible_chain(5, &mut rng, 0.0).unwrap();
        assert!(p.is_primitive());
        assert!(p.stationary_distribution(1e-12).is_ok());
    }

    #[test]
    fn metropolis_equal_energies_is_uniform() {
        let p = metropolis_chain(&[0.3; 6], 0.7).unwrap();
        let pi = p.stationary_distribution(1e-12).unwrap();
        let uniform = Distribution::uniform(6);
        assert!(pi.total_variation(&uniform).unwrap() < 1e-10);
    }

    #[test]
    fn metropolis_two_level_gibbs_ratio() {
        let e = 0.9f64;
        let t = e / 2.0f64.ln();
        let p = metropolis_chain(&[0.0, e], t).unwrap();
        let pi = p.stationary_distribution(1e-12).unwrap();
        assert!((pi.get(0) - 2.0 / 3.0).abs() < 1e-10);
        assert!((pi.get(1) - 1.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn metropolis_high_temperature_is_near_uniform() {
        let energies = [0.1, 0.9, 0.4, 0.6, 0.2];
        let p = metropolis_chain(&energies, 1e6).unwrap();
        let pi = p.stationary_distribution(1e-12).unwrap();
        assert!(pi.total_variation(&Distribution::uniform(5)).unwrap() < 1e-3);
    }

    #[test]
    fn metropolis_matches_gibbs_exactly() {
        let energies = [0.0, 0.125, 0.25, 0.375, 0.5, 0.625];
        let p = metropolis_chain(&energies, 0.5).unwrap();
        let pi = p.stationary_distribution(1e-12).unwrap();
        assert!(p.is_reversible(&pi, 1e-10));
        let pi = p.stationary_distribution(1e-12).unwrap();
        let gibbs = gibbs_distribution(&energies, 0.5).unwrap();
        for i in 0..6 {
            assert!((pi.get(i) - gibbs.get(i)).abs() < 1e-8);
        }
        let summary = p.spectral_gap().unwrap();
        assert!(summary.eigenvalues.iter().all(|&l| l >= -1e-12));
    }

    #[test]
    fn constant_sequence_repeats_one_chain() {
        let mut seq =
            ChainSequence::new(spec(SequenceFamily::ConstantChain, 4, 5), 31).unwrap();
        let first = seq.next_step().unwrap().unwrap();
        assert!(first.hint.is_some());
        let mut count = 1;
        while let Some(step) = seq.next_step().unwrap() {
            assert!(step.hint.is_none());
            assert_eq!(step.chain.entries(), first.chain.entries());
            assert_eq!(step.delta, first.delta);
            count += 1;
        }
        assert_eq!(count, 5);
    }

    #[test]
    fn annealing_sequence_meets_targets_and_ends_mode_accessible() {
        let mut s = spec(SequenceFamily::MetropolisAnnealing, 8, 20);
        s.target_eta = 0.9;
        let mut seq = ChainSequence::new(s, 41).unwrap();
        let mut prev: Option<(Distribution, f64)> = None;
        let mut last_pi = None;
        let mut steps = 0;
        while let Some(step) = seq.next_step().unwrap() {
            let pi = step.chain.stationary_distribution(1e-12).unwrap();
            let delta = step.chain.spectral_gap().unwrap().spectral_gap;
            assert!((delta - step.delta).abs() < 1e-9);
            if let Some((ppi, pdelta)) = &prev {
                let fid = ppi.fidelity_coherent(&pi).unwrap();
                assert!(fid >= 0.9, "neighbor fidelity {fid}");
                assert!(delta >= pdelta / 2.0 && delta <= pdelta * 2.0);
            }
            prev = Some((pi.clone(), delta));
            last_pi = Some(pi);
            steps += 1;
        }
        assert_eq!(steps, 20);
        let final_regime = last_pi.unwrap().classify_regime().unwrap();
        assert_eq!(final_regime.regime, Regime::ModeAccessible);
    }

    #[test]
    fn perturbed_sequence_keeps_gaps_close() {
        let mut seq =
            ChainSequence::new(spec(SequenceFamily::PerturbedWeights, 6, 40), 51).unwrap();
        let mut prev: Option<(Distribution, f64)> = None;
        while let Some(step) = seq.next_step().unwrap() {
            let pi = step.chain.stationary_distribution(1e-12).unwrap();
            assert!(step.chain.is_reversible(&pi, 1e-10));
            let pi = step.chain.stationary_distribution(1e-12).unwrap();
            if let Some((ppi, pdelta)) = &prev {
                assert!(ppi.fidelity_coherent(&pi).unwrap() >= 0.9);
                assert!(step.delta >= pdelta / 2.0 && step.delta <= pdelta * 2.0);
            }
            prev = Some((pi, step.delta));
        }
    }

    #[test]
    fn unsatisfiable_target_underflows() {
        let mut s = spec(SequenceFamily::MetropolisAnnealing, 4, 5);
        s.target_eta = 1.0;
        let mut seq = ChainSequence::new(s, 61).unwrap();
        seq.next_step().unwrap();
        let err = seq.next_step().unwrap_err();
        assert!(matches!(err, Error::StepSizeUnderflow));
    }

    #[test]
    fn sequences_are_deterministic_per_seed() {
        let render = |seed: u64| -> Vec<String> {
            let mut seq =
                ChainSequence::new(spec(SequenceFamily::PerturbedWeights, 5, 6), seed).unwrap();
            let mut out = Vec::new();
            while let Some(step) = seq.next_step().unwrap() {
                out.push(format!("{:?}{}", step.chain.entries(), step.delta));
            }
            out
        };
        assert_eq!(render(71), render(71));
        assert_ne!(render(71), render(72));
    }

    #[test]
    fn lazify_hits_target_gap() {
        let pi = boundary_distribution(8).unwrap();
        let base = rank_one_chain(&pi).unwrap();
        for &target in &[0.25, 0.05, 0.01] {
            let lazy = lazify_to_gap(&base, target).unwrap();
            let summary = lazy.spectral_gap().unwrap();
            assert!(
                (summary.spectral_gap - target).abs() < 1e-9,
                "gap {} want {target}",
                summary.spectral_gap
            );
            let stat = lazy.stationary_distribution(1e-12).unwrap();
            assert!(stat.total_variation(&pi).unwrap() < 1e-9);
        }
        assert!(lazify_to_gap(&base, 0.9).is_err());
    }

    #[test]
    fn boundary_distribution_sits_at_regime_edge() {
        for &n in &[4usize, 16, 64] {
            let b = boundary_distribution(n).unwrap();
            let f = b.fidelity_uniform();
            assert!((f - 1.0 / (n as f64).sqrt()).abs() < 2e-3, "f {f} at n {n}");
            assert!((0..n).all(|i| b.get(i) > 0.0));
        }
    }

    #[test]
    fn families_pin_their_gaps() {
        let scaling = scaling_family(&[4, 8, 16], 0.25).unwrap();
        for (_, chain) in &scaling {
            let gap = chain.spectral_gap().unwrap().spectral_gap;
            assert!((gap - 0.25).abs() < 1e-9);
        }
        let gaps = gap_family(8, &[0.2, 0.02, 0.002]).unwrap();
        for (delta, chain) in &gaps {
            let gap = chain.spectral_gap().unwrap().spectral_gap;
            assert!((gap - delta).abs() < 1e-9);
        }
    }

    #[test]
    fn varied_distributions_are_valid_and_diverse() {
        let mut rng = RngStream::new(81);
        let mut min_f = f64::INFINITY;
        let mut max_f = 0.0f64;
        for _ in 0..200 {
            let d = random_distribution_varied(16, &mut rng).unwrap();
            let total: f64 = (0..16).map(|i| d.get(i)).sum();
            assert!((total - 1.0).abs() < 1e-9);
            let f = d.fidelity_uniform();
            min_f = min_f.min(f);
            max_f = max_f.max(f);
        }
        assert!(min_f < 0.5, "varied draws never concentrated: min F {min_f}");
        assert!(max_f > 0.9, "varied draws never spread out: max F {max_f}");
    }
}
