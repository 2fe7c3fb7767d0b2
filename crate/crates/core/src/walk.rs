//! Quantum walk operators built from a reversible chain.
//!
//! The diffusion unitary acts on two size-`n` registers and loads the
//! transition amplitudes of `P` into register II conditioned on register I.
//! Reflecting through the two column subspaces it generates and composing
//! the reflections yields the walk operator, whose eigenphases on the busy
//! subspace encode the spectrum of the chain: an eigenvalue `lambda` of the
//! discriminant shows up as the reported phase pair `±arccos(lambda)`.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::ledger::CostLedger;
use crate::linalg;
use crate::markov::{Distribution, StochasticMatrix};
use crate::rng::RngStream;
use crate::sim::{measure_register_is_zero, LinearOperator, OpKind, Register, StateVector};
use crate::tol;

/// The walk operator for one chain together with its building blocks.
#[derive(Debug, Clone)]
pub struct WalkBundle {
    pub p: StochasticMatrix,
    pub pi: Distribution,
    pub u_p: LinearOperator,
    pub v_p: LinearOperator,
    pub ref_a: LinearOperator,
    pub ref_b: LinearOperator,
    pub w: LinearOperator,
    pub delta: f64,
    pub predicted_phase_gap: f64,
}

impl WalkBundle {
    pub fn n(&self) -> usize {
        self.p.n()
    }

    pub fn walk_dim(&self) -> usize {
        self.p.n() * self.p.n()
    }

    /// Coherent stationary state `U_P sum_i sqrt(pi_i)|i>|0>`.
    pub fn stationary_state(&self) -> Result<StateVector> {
        coherent_encoding(&self.pi, &self.u_p)
    }
}

fn diffusion_blocks(p: &StochasticMatrix, alternate_completion: bool) -> Vec<Vec<f64>> {
    let n = p.n();
    (0..n)
        .map(|i| {
            let c: Vec<f64> = (0..n).map(|j| p.p(j, i).max(0.0).sqrt()).collect();
            let h = linalg::householder_extension(&c);
            if !alternate_completion || n == 1 {
                return h;
            }
            let mut out = vec![0.0; n * n];
            for r in 0..n {
                out[r * n] = h[r * n];
                for k in 1..n {
                    let src = 1 + (k % (n - 1));
                    out[r * n + k] = -h[r * n + src];
                }
            }
            out
        })
        .collect()
}

/// Diffusion unitary with `U_P|i>|0> = |i> sum_j sqrt(P_ji)|j>`. Columns
/// with register II away from zero get a fixed deterministic completion.
pub fn build_diffusion(p: &StochasticMatrix) -> LinearOperator {
    LinearOperator::block_diffusion(p.n(), diffusion_blocks(p, false), false)
}

/// Same loaded columns, different deterministic completion. Observable
/// behavior of the reflectors and the walk must not depend on the choice.
pub fn build_diffusion_alternate(p: &StochasticMatrix) -> LinearOperator {
    LinearOperator::block_diffusion(p.n(), diffusion_blocks(p, true), false)
}

fn walk_register_count(op: &LinearOperator) -> usize {
    (op.dim() as f64).sqrt().round() as usize
}

/// Swapped-register diffusion `V_P = SWAP U_P SWAP`.
pub fn build_swapped_diffusion(u_p: &LinearOperator) -> LinearOperator {
    let n = walk_register_count(u_p);
    LinearOperator::composed(vec![
        LinearOperator::swap_registers(n),
        u_p.clone(),
        LinearOperator::swap_registers(n),
    ])
    .with_kind(OpKind::DiffusionCall)
}

/// Reflection through `A = span{U_P|i>|0>}`.
pub fn build_ref_a(u_p: &LinearOperator) -> LinearOperator {
    let n = walk_register_count(u_p);
    LinearOperator::composed(vec![
        u_p.adjoint().with_kind(OpKind::Untagged),
        LinearOperator::zero_reflector(n, Register::II),
        u_p.clone().with_kind(OpKind::Untagged),
    ])
}

/// Reflection through `B = span{V_P|0>|j>}`.
pub fn build_ref_b(v_p: &LinearOperator) -> LinearOperator {
    let n = walk_register_count(v_p);
    LinearOperator::composed(vec![
        v_p.adjoint().with_kind(OpKind::Untagged),
        LinearOperator::zero_reflector(n, Register::I),
        v_p.clone().with_kind(OpKind::Untagged),
    ])
}

/// Build the full walk bundle for an ergodic reversible chain.
pub fn build_walk(p: &StochasticMatrix) -> Result<WalkBundle> {
    let pi = p.stationary_distribution(tol::STATIONARY)?;
    let summary = p.spectral_gap()?;
    let u_p = build_diffusion(p);
    let v_p = build_swapped_diffusion(&u_p);
    let ref_a = build_ref_a(&u_p);
    let ref_b = build_ref_b(&v_p);
    let w = LinearOperator::composed(vec![ref_a.clone(), ref_b.clone()])
        .with_kind(OpKind::WalkCall);
    Ok(WalkBundle {
        p: p.clone(),
        pi,
        u_p,
        v_p,
        ref_a,
        ref_b,
        w,
        delta: summary.spectral_gap,
        predicted_phase_gap: summary.phase_gap,
    })
}

/// `U_P sum_i sqrt(pi_i)|i>|0>`; measuring register I samples `pi`.
pub fn coherent_encoding(pi: &Distribution, u_p: &LinearOperator) -> Result<StateVector> {
    let n = pi.n();
    if u_p.dim() != n * n {
        return Err(Error::DimensionMismatch { expected: u_p.dim(), got: n * n });
    }
    let mut amps = vec![Complex64::ZERO; n * n];
    for i in 0..n {
        amps[i * n] = Complex64::new(pi.get(i).sqrt(), 0.0);
    }
    u_p.apply(&StateVector::raw(n, 0, amps))
}

/// Projectively test membership in `A`: rotate by `U_P` adjoint, check
/// register II against zero, rotate back on the success branch.
pub fn membership_test_a(
    state: &StateVector,
    u_p: &LinearOperator,
    rng: &mut RngStream,
) -> Result<(bool, StateVector)> {
    let rotated = u_p.adjoint().apply(state)?;
    let (zero, collapsed) = measure_register_is_zero(&rotated, Register::II, rng);
    if zero {
        Ok((true, u_p.apply(&collapsed)?))
    } else {
        Ok((false, collapsed))
    }
}

/// Same test, charging two diffusion calls and one projective measurement.
pub fn membership_test_a_counted(
    state: &StateVector,
    u_p: &LinearOperator,
    rng: &mut RngStream,
    ledger: &mut CostLedger,
) -> Result<(bool, StateVector)> {
    ledger.charge_diffusion_calls(2);
    ledger.charge_projective_measurement();
    membership_test_a(state, u_p, rng)
}

/// The `A` basis vectors `a_i = U_P|i>|0>` as real amplitude vectors.
pub fn a_basis(bundle: &WalkBundle) -> Vec<Vec<f64>> {
    let n = bundle.n();
    (0..n)
        .map(|i| {
            let mut v = vec![0.0; n * n];
            for j in 0..n {
                v[i * n + j] = bundle.p.p(j, i).max(0.0).sqrt();
            }
            v
        })
        .collect()
}

/// The `B` basis vectors `b_j = V_P|0>|j>` as real amplitude vectors.
pub fn b_basis(bundle: &WalkBundle) -> Vec<Vec<f64>> {
    let n = bundle.n();
    (0..n)
        .map(|j| {
            let mut v = vec![0.0; n * n];
            for i in 0..n {
                v[i * n + j] = bundle.p.p(i, j).max(0.0).sqrt();
            }
            v
        })
        .collect()
}

/// Orthonormal basis of the busy subspace `A + B`.
pub fn busy_basis(bundle: &WalkBundle) -> Vec<Vec<f64>> {
    let mut vectors = a_basis(bundle);
    vectors.extend(b_basis(bundle));
    linalg::gram_schmidt(&vectors, tol::BUSY_RANK)
}

/// Reported eigenphases of the walk on the busy subspace, sorted
/// ascending. Each discriminant eigenvalue `lambda` contributes
/// `±arccos(lambda)`; the stationary direction contributes `0`. Half-turn
/// eigenvalue pairs of the walk are reported as `±pi/2`.
pub fn eigenphases_reported(bundle: &WalkBundle) -> Result<Vec<f64>> {
    let basis = busy_basis(bundle);
    let k = basis.len();
    let n = bundle.n();
    let mut m_red = vec![0.0f64; k * k];
    for (q_idx, q) in basis.iter().enumerate() {
        let state = StateVector::raw(
            n,
            0,
            q.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        );
        let image = bundle.w.apply(&state)?;
        for (p_idx, p_vec) in basis.iter().enumerate() {
            let dot: f64 = p_vec.iter().zip(image.amps()).map(|(a, b)| a * b.re).sum();
            m_red[p_idx * k + q_idx] = dot;
        }
    }
    let pairs = linalg::orthogonal_eigenphases(k, &m_red, tol::EIGENPAIR_RESIDUAL)?;
    let mut half_turns = 0usize;
    let mut reported: Vec<f64> = Vec::with_capacity(k);
    for (phi, _) in &pairs {
        let mag = phi.abs();
        if mag <= tol::PHASE_SNAP {
            reported.push(0.0);
        } else if (PI - mag).abs() <= tol::PHASE_SNAP {
            half_turns += 1;
        } else {
            reported.push(phi / 2.0);
        }
    }
    if half_turns % 2 != 0 {
        return Err(Error::LemmaViolation {
            what: "odd count of half-turn walk eigenvalues on the busy subspace".into(),
        });
    }
    for idx in 0..half_turns {
        reported.push(if idx % 2 == 0 { FRAC_PI_2 } else { -FRAC_PI_2 });
    }
    reported.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(reported)
}

/// Measured phase gap: `min 2|theta|` over nonzero reported eigenphases.
pub fn phase_gap_measured(bundle: &WalkBundle) -> Result<f64> {
    let phases = eigenphases_reported(bundle)?;
    phases
        .iter()
        .filter(|t| t.abs() > 0.0)
        .map(|t| 2.0 * t.abs())
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))))
        .ok_or_else(|| Error::DomainError {
            what: "no nonzero eigenphase on the busy subspace".into(),
        })
}

/// Random-walk chain on a random weighted graph with balanced self-loops,
/// reversible with nonnegative discriminant spectrum. Test helper.
#[cfg(test)]
pub(crate) fn random_half_lazy_chain(n: usize, rng: &mut RngStream) -> StochasticMatrix {
    let mut w = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..i {
            if rng.bernoulli(0.7) {
                let v = rng.uniform() + 0.05;
                w[i * n + j] = v;
                w[j * n + i] = v;
            }
        }
    }
    for i in 0..n {
        let j = (i + 1) % n;
        if i != j && w[i * n + j] == 0.0 {
            let v = rng.uniform() + 0.05;
            w[i * n + j] = v;
            w[j * n + i] = v;
        }
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| w[i * n + j]).sum();
        w[i * n + i] = off.max(0.05);
    }
    let mut entries = vec![0.0f64; n * n];
    for j in 0..n {
        let total: f64 = (0..n).map(|i| w[i * n + j]).sum();
        for i in 0..n {
            entries[i * n + j] = w[i * n + j] / total;
        }
    }
    StochasticMatrix::from_entries(n, entries).unwrap()
}
