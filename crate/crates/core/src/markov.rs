//! Classical Markov-chain and distribution mathematics.
//!
//! Transition matrices are column-stochastic: `p(i, j)` is the probability
//! of moving from state `j` to state `i`, columns sum to 1, and stationarity
//! reads `P pi = pi`. Detailed balance is checked in flow form,
//! `pi_j P_ij = pi_i P_ji`, which matches the time-reversal definition
//! `P* = D(pi) P^T D(pi)^{-1}`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::RngStream;
use crate::tol;

/// Column-stochastic transition matrix over a finite state space.
#[derive(Debug, Clone)]
pub struct StochasticMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl StochasticMatrix {
    /// Validate a row-major grid as a column-stochastic matrix.
    pub fn from_rows(raw: &[Vec<f64>]) -> Result<Self> {
        let n = raw.len();
        if n == 0 {
            return Err(Error::TooFewStates { need: 1, got: 0 });
        }
        for row in raw {
            if row.len() != n {
                return Err(Error::NotSquare { rows: n, cols: row.len() });
            }
        }
        let mut entries = Vec::with_capacity(n * n);
        for row in raw {
            entries.extend_from_slice(row);
        }
        Self::from_entries(n, entries)
    }

    /// Validate a flat row-major entry vector.
    pub fn from_entries(n: usize, mut entries: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::TooFewStates { need: 1, got: 0 });
        }
        if entries.len() != n * n {
            return Err(Error::NotSquare { rows: n, cols: entries.len() / n.max(1) });
        }
        for i in 0..n {
            for j in 0..n {
                let v = entries[i * n + j];
                if v < -tol::ENTRY_NEGATIVITY {
                    return Err(Error::NegativeEntry { row: i, col: j, value: v });
                }
                if v < 0.0 {
                    entries[i * n + j] = 0.0;
                }
            }
        }
        for j in 0..n {
            let sum: f64 = (0..n).map(|i| entries[i * n + j]).sum();
            if (sum - 1.0).abs() > tol::COLUMN_SUM {
                return Err(Error::ColumnSumViolation { col: j, sum });
            }
        }
        Ok(Self { n, entries })
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        Self { n, entries }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Transition probability from state `j` to state `i`.
    pub fn p(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// Row-major entry slice.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Column `j`: the outgoing distribution of state `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.p(i, j)).collect()
    }

    /// True when some power of the chain's adjacency pattern is strictly
    /// positive, i.e. the chain is irreducible and aperiodic. Decided
    /// exactly on the boolean support via repeated squaring.
    pub fn is_primitive(&self) -> bool {
        let n = self.n;
        let mut b: Vec<bool> = self.entries.iter().map(|&v| v > 0.0).collect();
        // A primitive matrix has a strictly positive power at exponent
        // (n-1)^2 + 1; square until the exponent reaches that bound.
        let target = (n - 1) * (n - 1) + 1;
        let mut exponent = 1usize;
        loop {
            if b.iter().all(|&v| v) {
                return true;
            }
            if exponent >= target {
                return false;
            }
            let mut sq = vec![false; n * n];
            for i in 0..n {
                for k in 0..n {
                    if b[i * n + k] {
                        for j in 0..n {
                            if b[k * n + j] {
                                sq[i * n + j] = true;
                            }
                        }
                    }
                }
            }
            b = sq;
            exponent *= 2;
        }
    }

    /// The unique fixed point `P pi = pi` of an ergodic chain, with
    /// `|P pi - pi|_1` at most `tol`.
    pub fn stationary_distribution(&self, tol: f64) -> Result<Distribution> {
        let n = self.n;
        if !self.is_primitive() {
            return Err(Error::NotErgodic);
        }
        // Solve (P - I) x = 0 with the normalization sum(x) = 1 spliced in
        // as the last equation, then polish with power iteration.
        let a = DMatrix::from_fn(n, n, |i, j| {
            if i == n - 1 {
                1.0
            } else {
                self.p(i, j) - if i == j { 1.0 } else { 0.0 }
            }
        });
        let mut b = DVector::zeros(n);
        b[n - 1] = 1.0;
        let mut x: Vec<f64> = match a.lu().solve(&b) {
            Some(sol) => sol.iter().copied().collect(),
            None => return Err(Error::NotErgodic),
        };
        for v in &mut x {
            if *v < 0.0 && *v > -1e-9 {
                *v = 0.0;
            }
        }
        let normalize = |x: &mut Vec<f64>| {
            let s: f64 = x.iter().sum();
            for v in x.iter_mut() {
                *v /= s;
            }
        };
        normalize(&mut x);
        let residual_l1 = |x: &[f64]| -> f64 {
            let px = linalg::mat_vec(n, &self.entries, x);
            px.iter().zip(x).map(|(a, b)| (a - b).abs()).sum()
        };
        let mut iters = 0;
        while residual_l1(&x) > tol {
            x = linalg::mat_vec(n, &self.entries, &x);
            normalize(&mut x);
            iters += 1;
            if iters > 100_000 {
                return Err(Error::LemmaViolation {
                    what: format!(
                        "stationary fixed point did not converge, residual {:.3e}",
                        residual_l1(&x)
                    ),
                });
            }
        }
        if x.iter().any(|&v| v <= tol::STATIONARY_POSITIVITY) {
            return Err(Error::NotErgodic);
        }
        Distribution::from_probs(x)
    }

    /// Largest detailed-balance violation `|pi_j P_ij - pi_i P_ji|`.
    pub fn detailed_balance_residual(&self, pi: &Distribution) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..i {
                let flow_ji = pi.get(j) * self.p(i, j);
                let flow_ij = pi.get(i) * self.p(j, i);
                worst = worst.max((flow_ji - flow_ij).abs());
            }
        }
        worst
    }

    /// Whether the chain satisfies detailed balance with respect to `pi`.
    pub fn is_reversible(&self, pi: &Distribution, tol: f64) -> bool {
        self.n == pi.n() && self.detailed_balance_residual(pi) <= tol
    }

    /// Time reversal `P* = D(pi) P^T D(pi)^{-1}`; equals `P` exactly when
    /// the chain is reversible.
    pub fn time_reversal(&self, pi: &Distribution) -> Result<StochasticMatrix> {
        let n = self.n;
        if pi.n() != n {
            return Err(Error::DimensionMismatch { expected: n, got: pi.n() });
        }
        for i in 0..n {
            if pi.get(i) <= tol::STATIONARY_POSITIVITY {
                return Err(Error::ZeroStationaryProbability { index: i });
            }
        }
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                entries[i * n + j] = pi.get(i) * self.p(j, i) / pi.get(j);
            }
        }
        // pi only needs to be stationary up to rounding; absorb the residual
        // when it is tiny and let validation flag anything larger.
        for j in 0..n {
            let sum: f64 = (0..n).map(|i| entries[i * n + j]).sum();
            if (sum - 1.0).abs() <= 1e-9 {
                for i in 0..n {
                    entries[i * n + j] /= sum;
                }
            }
        }
        Self::from_entries(n, entries)
    }

    /// Similarity transform `D(pi)^{-1/2} P D(pi)^{1/2}` (row-major), which
    /// is symmetric exactly when the chain is reversible and shares its
    /// spectrum with `P`.
    pub fn symmetrization(&self, pi: &Distribution) -> Result<Vec<f64>> {
        let n = self.n;
        if pi.n() != n {
            return Err(Error::DimensionMismatch { expected: n, got: pi.n() });
        }
        for i in 0..n {
            if pi.get(i) <= tol::STATIONARY_POSITIVITY {
                return Err(Error::ZeroStationaryProbability { index: i });
            }
        }
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] = self.p(i, j) * (pi.get(j) / pi.get(i)).sqrt();
            }
        }
        Ok(m)
    }

    /// Entrywise `sqrt(P_ij P_ji)`; coincides with the symmetrization for
    /// reversible chains.
    pub fn discriminant(&self) -> Vec<f64> {
        let n = self.n;
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                d[i * n + j] = (self.p(i, j) * self.p(j, i)).sqrt();
            }
        }
        d
    }

    /// Full spectral data of an ergodic reversible chain.
    pub fn spectral_gap(&self) -> Result<SpectralSummary> {
        let pi = self.stationary_distribution(tol::STATIONARY)?;
        let residual = self.detailed_balance_residual(&pi);
        if residual > tol::REVERSIBILITY {
            return Err(Error::NotReversible { residual });
        }
        let m = self.symmetrization(&pi)?;
        let eigenvalues = linalg::symmetric_eigenvalues(self.n, &m);
        SpectralSummary::from_eigenvalues(eigenvalues)
    }

    /// Parse the plain-text format: line 1 holds N, the next N lines hold
    /// one row of N decimals each.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let n: usize = lines
            .next()
            .ok_or_else(|| Error::Parse { what: "empty matrix file".into() })?
            .trim()
            .parse()
            .map_err(|e| Error::Parse { what: format!("bad state count: {e}") })?;
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            let line = lines.next().ok_or_else(|| Error::Parse {
                what: format!("expected {n} matrix rows, found {i}"),
            })?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|e| Error::Parse { what: format!("row {i}: {e}") })
                })
                .collect::<Result<_>>()?;
            if row.len() != n {
                return Err(Error::Parse {
                    what: format!("row {i} has {} entries, expected {n}", row.len()),
                });
            }
            entries.extend_from_slice(&row);
        }
        Self::from_entries(n, entries)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.n);
        for i in 0..self.n {
            let row: Vec<String> =
                (0..self.n).map(|j| format!("{}", self.p(i, j))).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

/// Probability distribution over a finite state space.
#[derive(Debug, Clone)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    pub fn from_probs(mut probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::TooFewStates { need: 1, got: 0 });
        }
        for (i, v) in probs.iter_mut().enumerate() {
            if *v < -tol::ENTRY_NEGATIVITY {
                return Err(Error::NegativeEntry { row: i, col: 0, value: *v });
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > tol::COLUMN_SUM {
            return Err(Error::PreconditionViolated {
                what: format!("probabilities sum to {sum}, expected 1"),
            });
        }
        Ok(Self { probs })
    }

    pub fn uniform(n: usize) -> Self {
        Self { probs: vec![1.0 / n as f64; n] }
    }

    pub fn point_mass(n: usize, index: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[index] = 1.0;
        Self { probs }
    }

    pub fn n(&self) -> usize {
        self.probs.len()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.probs[i]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Sum of the square roots of the probabilities; lies in `[1, sqrt(N)]`
    /// and measures closeness to uniform via `F(pi, u) = f^2 / N`.
    pub fn f_value(&self) -> f64 {
        self.probs.iter().map(|p| p.sqrt()).sum()
    }

    /// Largest probability and its index, ties broken toward the smallest
    /// index.
    pub fn mode(&self) -> (usize, f64) {
        let mut best = 0;
        for i in 1..self.probs.len() {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        (best, self.probs[best])
    }

    /// Squared overlap of the coherent encodings: `(sum_i sqrt(a_i b_i))^2`.
    pub fn fidelity_coherent(&self, other: &Distribution) -> Result<f64> {
        if self.n() != other.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: other.n() });
        }
        let amp: f64 = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a * b).sqrt())
            .sum();
        Ok((amp * amp).min(1.0))
    }

    /// Fidelity of the coherent encoding to the uniform distribution.
    pub fn fidelity_uniform(&self) -> f64 {
        let f = self.f_value();
        (f * f / self.n() as f64).min(1.0)
    }

    /// Decide which preparation route is guaranteed to work: states with
    /// fidelity to uniform at least `1/sqrt(N)` are reachable by amplified
    /// preparation from uniform, and all others have a mode of probability
    /// at least `1/sqrt(N)` reachable by seeded unsearch. One of the two
    /// always holds; the internal assertion firing is a bug, not an input
    /// condition.
    pub fn classify_regime(&self) -> Result<RegimeLabel> {
        let threshold = 1.0 / (self.n() as f64).sqrt();
        let fidelity = self.fidelity_uniform();
        let (mode_index, mode_prob) = self.mode();
        let regime = if fidelity >= threshold {
            Regime::UniformAccessible
        } else {
            if mode_prob < threshold - tol::BOUND_GRACE {
                return Err(Error::LemmaViolation {
                    what: format!(
                        "fidelity to uniform {fidelity:.6e} < {threshold:.6e} but mode \
                         probability {mode_prob:.6e} is also below it"
                    ),
                });
            }
            Regime::ModeAccessible
        };
        Ok(RegimeLabel { regime, fidelity_to_uniform: fidelity, mode_index, mode_prob })
    }

    /// The heavy-element witness set `{i : pi_i >= 1/(4 sqrt(N))}`.
    ///
    /// Defined for distributions with `f(pi) <= N^{1/4}`; for those the set
    /// is guaranteed to carry at least half the probability mass, so any of
    /// its members makes a good unsearch seed.
    pub fn witness_set(&self) -> Result<Vec<usize>> {
        let n = self.n() as f64;
        let f = self.f_value();
        if f > n.powf(0.25) + tol::BOUND_GRACE {
            return Err(Error::PreconditionViolated {
                what: format!("f = {f:.6} exceeds N^(1/4) = {:.6}", n.powf(0.25)),
            });
        }
        let cut = 1.0 / (4.0 * n.sqrt());
        let set: Vec<usize> = (0..self.n()).filter(|&i| self.probs[i] >= cut).collect();
        let mass: f64 = set.iter().map(|&i| self.probs[i]).sum();
        if mass < 0.5 - tol::BOUND_GRACE {
            return Err(Error::LemmaViolation {
                what: format!("witness set mass {mass:.6} below 1/2"),
            });
        }
        Ok(set)
    }

    /// Draw one index with these probabilities.
    pub fn sample(&self, rng: &mut RngStream) -> usize {
        rng.weighted(&self.probs)
    }

    pub fn total_variation(&self, other: &Distribution) -> Result<f64> {
        if self.n() != other.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: other.n() });
        }
        let sum: f64 = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum();
        Ok(0.5 * sum)
    }

    /// Parse the plain-text format: line 1 holds N, line 2 the N decimals.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let n: usize = lines
            .next()
            .ok_or_else(|| Error::Parse { what: "empty distribution file".into() })?
            .trim()
            .parse()
            .map_err(|e| Error::Parse { what: format!("bad state count: {e}") })?;
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse { what: "missing probability line".into() })?;
        let probs: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| Error::Parse { what: e.to_string() }))
            .collect::<Result<_>>()?;
        if probs.len() != n {
            return Err(Error::Parse {
                what: format!("{} probabilities, expected {n}", probs.len()),
            });
        }
        Self::from_probs(probs)
    }

    pub fn render(&self) -> String {
        let probs: Vec<String> = self.probs.iter().map(|p| format!("{p}")).collect();
        format!("{}\n{}\n", self.n(), probs.join(" "))
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

/// Which preparation route a distribution guarantees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Fidelity to uniform is at least `1/sqrt(N)`.
    UniformAccessible,
    /// The mode carries probability at least `1/sqrt(N)`.
    ModeAccessible,
}

#[derive(Debug, Clone)]
pub struct RegimeLabel {
    pub regime: Regime,
    pub fidelity_to_uniform: f64,
    pub mode_index: usize,
    pub mode_prob: f64,
}

/// Real spectrum of a reversible chain with the derived gap quantities.
#[derive(Debug, Clone)]
pub struct SpectralSummary {
    /// Eigenvalues in ascending order; the largest is 1.
    pub eigenvalues: Vec<f64>,
    /// `1 - max |lambda|` over eigenvalues other than the leading 1.
    pub spectral_gap: f64,
    /// `2 acos(1 - spectral_gap)`, the walk-level gap this chain induces.
    pub phase_gap: f64,
}

impl SpectralSummary {
    pub fn from_eigenvalues(eigenvalues: Vec<f64>) -> Result<Self> {
        let top = *eigenvalues.last().unwrap();
        if (top - 1.0).abs() > 1e-8 {
            return Err(Error::LemmaViolation {
                what: format!("leading eigenvalue {top} differs from 1"),
            });
        }
        let sub = eigenvalues[..eigenvalues.len() - 1]
            .iter()
            .map(|l| l.abs())
            .fold(0.0, f64::max);
        let spectral_gap = 1.0 - sub;
        let phase_gap = 2.0 * (1.0 - spectral_gap).clamp(-1.0, 1.0).acos();
        Ok(Self { eigenvalues, spectral_gap, phase_gap })
    }
}

/// The distribution minimizing fidelity to uniform among all distributions
/// with maximum probability `p_max`: `floor(1/p_max)` entries at `p_max`,
/// one remainder entry, zeros elsewhere.
pub fn extremal_distribution(p_max: f64, n: usize) -> Result<Distribution> {
    if !(0.0..=1.0).contains(&p_max) || p_max == 0.0 {
        return Err(Error::DomainError {
            what: format!("p_max = {p_max} outside (0, 1]"),
        });
    }
    let k = (1.0 / p_max + 1e-12).floor() as usize;
    if k + 1 > n {
        return Err(Error::TooFewStates { need: k + 1, got: n });
    }
    let mut probs = vec![0.0; n];
    for p in probs.iter_mut().take(k) {
        *p = p_max;
    }
    probs[k] = (1.0 - k as f64 * p_max).max(0.0);
    Distribution::from_probs(probs)
}
