//! Dense statevector simulation of the two-register walk space.
//!
//! A state lives on register I and register II, each of size `n`, plus an
//! optional block of ancilla qubits. Amplitudes are stored ancilla-major:
//! the index is `a * n^2 + i * n + j` for ancilla pattern `a`, register-I
//! value `i`, register-II value `j`. Operators act on the walk registers
//! blockwise within every ancilla slice, so the same operator value works
//! on bare and ancilla-extended states.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::ledger::CostLedger;
use crate::rng::RngStream;
use crate::tol;

/// Pure state over the walk registers plus ancillas.
#[derive(Debug, Clone)]
pub struct StateVector {
    n: usize,
    ancilla_bits: u32,
    amps: Vec<Complex64>,
}

/// Which register a measurement addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Register {
    I,
    II,
    Ancilla,
}

impl StateVector {
    /// Basis state `|i>|j>` with no ancillas.
    pub fn basis(n: usize, i: usize, j: usize) -> Self {
        let mut amps = vec![Complex64::ZERO; n * n];
        amps[i * n + j] = Complex64::ONE;
        Self { n, ancilla_bits: 0, amps }
    }

    /// Wrap explicit amplitudes; must be normalized.
    pub fn from_amps(n: usize, ancilla_bits: u32, amps: Vec<Complex64>) -> Result<Self> {
        let expect = n * n * (1usize << ancilla_bits);
        if amps.len() != expect {
            return Err(Error::DimensionMismatch { expected: expect, got: amps.len() });
        }
        let s = Self { n, ancilla_bits, amps };
        let norm = s.norm();
        if (norm - 1.0).abs() > tol::UNIT_NORM {
            return Err(Error::PreconditionViolated {
                what: format!("state norm {norm} is not 1"),
            });
        }
        Ok(s)
    }

    /// Real amplitudes on the bare walk space, normalized by the caller.
    pub fn from_real_walk(n: usize, amps: &[f64]) -> Result<Self> {
        Self::from_amps(n, 0, amps.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn walk_dim(&self) -> usize {
        self.n * self.n
    }

    pub fn ancilla_bits(&self) -> u32 {
        self.ancilla_bits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub(crate) fn amps_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub(crate) fn raw(n: usize, ancilla_bits: u32, amps: Vec<Complex64>) -> Self {
        Self { n, ancilla_bits, amps }
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub(crate) fn renormalize(&mut self) {
        let norm = self.norm();
        for a in &mut self.amps {
            *a /= norm;
        }
    }

    /// Append `bits` ancilla qubits initialized to zero.
    pub fn attach_ancillas(&self, bits: u32) -> Self {
        let mut amps = vec![Complex64::ZERO; self.amps.len() << bits];
        amps[..self.amps.len()].copy_from_slice(&self.amps);
        Self { n: self.n, ancilla_bits: self.ancilla_bits + bits, amps }
    }

    /// Discard all ancillas, which must carry no amplitude outside zero.
    pub fn detach_ancillas(&self) -> Result<Self> {
        let d = self.walk_dim();
        let stray: f64 = self.amps[d..].iter().map(|a| a.norm_sqr()).sum();
        if stray > tol::UNIT_NORM {
            return Err(Error::PreconditionViolated {
                what: format!("ancillas carry probability {stray:.3e}"),
            });
        }
        let mut out = Self { n: self.n, ancilla_bits: 0, amps: self.amps[..d].to_vec() };
        out.renormalize();
        Ok(out)
    }
}

/// Inner product `<a|b>`.
pub fn overlap(a: &StateVector, b: &StateVector) -> Result<Complex64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    Ok(a.amps.iter().zip(&b.amps).map(|(x, y)| x.conj() * y).sum())
}

/// `sqrt(1 - |<a|b>|^2)` for pure states.
pub fn trace_distance_pure(a: &StateVector, b: &StateVector) -> Result<f64> {
    let f = overlap(a, b)?.norm_sqr();
    Ok((1.0 - f.min(1.0)).max(0.0).sqrt())
}

/// Squared overlap `|<a|b>|^2`.
pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    Ok(overlap(a, b)?.norm_sqr().min(1.0))
}

/// Measure one register in the computational basis; returns the outcome
/// and the collapsed, renormalized state.
pub fn measure_register(
    s: &StateVector,
    which: Register,
    rng: &mut RngStream,
) -> (usize, StateVector) {
    let n = s.n;
    let outcomes = match which {
        Register::I | Register::II => n,
        Register::Ancilla => 1usize << s.ancilla_bits,
    };
    let mut probs = vec![0.0f64; outcomes];
    for (idx, amp) in s.amps.iter().enumerate() {
        probs[register_value(idx, n, which)] += amp.norm_sqr();
    }
    let outcome = rng.weighted(&probs);
    let mut out = s.clone();
    for (idx, amp) in out.amps.iter_mut().enumerate() {
        if register_value(idx, n, which) != outcome {
            *amp = Complex64::ZERO;
        }
    }
    out.renormalize();
    (outcome, out)
}

/// Two-outcome measurement of whether a register reads zero; collapses
/// accordingly. Returns the outcome and the post state.
pub fn measure_register_is_zero(
    s: &StateVector,
    which: Register,
    rng: &mut RngStream,
) -> (bool, StateVector) {
    let n = s.n;
    let p_zero: f64 = s
        .amps
        .iter()
        .enumerate()
        .filter(|(idx, _)| register_value(*idx, n, which) == 0)
        .map(|(_, a)| a.norm_sqr())
        .sum();
    let zero = rng.bernoulli(p_zero.clamp(0.0, 1.0));
    let mut out = s.clone();
    for (idx, amp) in out.amps.iter_mut().enumerate() {
        if (register_value(idx, n, which) == 0) != zero {
            *amp = Complex64::ZERO;
        }
    }
    out.renormalize();
    (zero, out)
}

fn register_value(idx: usize, n: usize, which: Register) -> usize {
    match which {
        Register::I => (idx / n) % n,
        Register::II => idx % n,
        Register::Ancilla => idx / (n * n),
    }
}

/// Cost class an operator application is charged to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    WalkCall,
    DiffusionCall,
    Untagged,
}

/// A rule that needs the whole extended state, ancillas included, rather
/// than acting blockwise on walk slices. Implementations must be unitary.
pub trait ExtendedRule: std::fmt::Debug + Send + Sync {
    /// Ancilla count the rule expects on its input state.
    fn ancilla_bits(&self) -> u32;
    fn apply(&self, s: &mut StateVector);
    fn apply_adjoint(&self, s: &mut StateVector) {
        self.apply(s);
    }
}

#[derive(Debug)]
struct AdjointExtended(Arc<dyn ExtendedRule>);

impl ExtendedRule for AdjointExtended {
    fn ancilla_bits(&self) -> u32 {
        self.0.ancilla_bits()
    }

    fn apply(&self, s: &mut StateVector) {
        self.0.apply_adjoint(s);
    }

    fn apply_adjoint(&self, s: &mut StateVector) {
        self.0.apply(s);
    }
}

#[derive(Debug, Clone)]
enum Rule {
    Identity,
    /// Row-major dense matrix on the walk space.
    Dense(Arc<Vec<Complex64>>),
    /// Register-II rotation `sum_i |i><i| (x) H_i` with real blocks `H_i`.
    BlockDiffusion { blocks: Arc<Vec<Vec<f64>>>, adjoint: bool },
    /// `|i>|j> -> |j>|i>`.
    SwapRegisters,
    /// `2|0><0| - 1` on one walk register: negates every component whose
    /// register value is nonzero.
    ZeroReflector(Register),
    /// Negate components whose register-I value is marked.
    MarkedFlip(Arc<Vec<bool>>),
    /// `2|s><s| - 1` for a fixed walk-space state.
    ReflectAbout(Arc<StateVector>),
    /// Parts applied left to right.
    Composed(Arc<Vec<LinearOperator>>),
    /// Whole-state rule with a fixed ancilla contract.
    Extended(Arc<dyn ExtendedRule>),
}

/// A unitary (or more general linear) map on the walk space, applied
/// blockwise over ancilla slices. An `Extended` rule instead consumes the
/// whole state including a fixed number of ancillas.
#[derive(Debug, Clone)]
pub struct LinearOperator {
    dim: usize,
    kind: OpKind,
    charge: u64,
    rule: Rule,
}

impl LinearOperator {
    pub fn identity(dim: usize) -> Self {
        Self { dim, kind: OpKind::Untagged, charge: 1, rule: Rule::Identity }
    }

    /// Dense walk-space matrix (row-major, `dim x dim`).
    pub fn dense(dim: usize, matrix: Vec<Complex64>) -> Result<Self> {
        if matrix.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, got: matrix.len() });
        }
        Ok(Self { dim, kind: OpKind::Untagged, charge: 1, rule: Rule::Dense(Arc::new(matrix)) })
    }

    pub(crate) fn block_diffusion(n: usize, blocks: Vec<Vec<f64>>, adjoint: bool) -> Self {
        Self {
            dim: n * n,
            kind: OpKind::DiffusionCall,
            charge: 1,
            rule: Rule::BlockDiffusion { blocks: Arc::new(blocks), adjoint },
        }
    }

    pub fn swap_registers(n: usize) -> Self {
        Self { dim: n * n, kind: OpKind::Untagged, charge: 1, rule: Rule::SwapRegisters }
    }

    /// `2|0><0| - 1` on the given register.
    pub fn zero_reflector(n: usize, which: Register) -> Self {
        Self { dim: n * n, kind: OpKind::Untagged, charge: 1, rule: Rule::ZeroReflector(which) }
    }

    pub fn marked_flip(n: usize, marked: Vec<bool>) -> Self {
        Self { dim: n * n, kind: OpKind::Untagged, charge: 1, rule: Rule::MarkedFlip(Arc::new(marked)) }
    }

    pub fn reflect_about(state: StateVector) -> Self {
        Self {
            dim: state.walk_dim(),
            kind: OpKind::Untagged,
            charge: 1,
            rule: Rule::ReflectAbout(Arc::new(state)),
        }
    }

    pub fn composed(parts: Vec<LinearOperator>) -> Self {
        let dim = parts.first().map_or(0, |p| p.dim);
        Self { dim, kind: OpKind::Untagged, charge: 1, rule: Rule::Composed(Arc::new(parts)) }
    }

    /// Whole-state rule; the operator requires exactly
    /// `rule.ancilla_bits()` ancillas on its input.
    pub fn extended(walk_dim: usize, rule: Arc<dyn ExtendedRule>) -> Self {
        Self { dim: walk_dim, kind: OpKind::Untagged, charge: 1, rule: Rule::Extended(rule) }
    }

    pub fn with_kind(mut self, kind: OpKind) -> Self {
        self.kind = kind;
        self
    }

    /// Cost units charged per application (default 1).
    pub fn with_charge(mut self, charge: u64) -> Self {
        self.charge = charge;
        self
    }

    pub fn charge(&self) -> u64 {
        self.charge
    }

    /// Adjoint operator, carrying the same cost class.
    pub fn adjoint(&self) -> Self {
        let rule = match &self.rule {
            Rule::Identity => Rule::Identity,
            Rule::Dense(m) => {
                let d = self.dim;
                let mut t = vec![Complex64::ZERO; d * d];
                for r in 0..d {
                    for c in 0..d {
                        t[c * d + r] = m[r * d + c].conj();
                    }
                }
                Rule::Dense(Arc::new(t))
            }
            Rule::BlockDiffusion { blocks, adjoint } => {
                Rule::BlockDiffusion { blocks: blocks.clone(), adjoint: !adjoint }
            }
            Rule::SwapRegisters => Rule::SwapRegisters,
            Rule::ZeroReflector(r) => Rule::ZeroReflector(*r),
            Rule::MarkedFlip(m) => Rule::MarkedFlip(m.clone()),
            Rule::ReflectAbout(s) => Rule::ReflectAbout(s.clone()),
            Rule::Composed(parts) => {
                Rule::Composed(Arc::new(parts.iter().rev().map(|p| p.adjoint()).collect()))
            }
            Rule::Extended(rule) => Rule::Extended(Arc::new(AdjointExtended(rule.clone()))),
        };
        Self { dim: self.dim, kind: self.kind, charge: self.charge, rule }
    }

    pub fn kind(&self) -> OpKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Apply without cost accounting.
    pub fn apply(&self, s: &StateVector) -> Result<StateVector> {
        if s.walk_dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: s.walk_dim() });
        }
        if let Rule::Extended(rule) = &self.rule {
            if s.ancilla_bits() != rule.ancilla_bits() {
                return Err(Error::PreconditionViolated {
                    what: format!(
                        "operator expects {} ancilla bits, state has {}",
                        rule.ancilla_bits(),
                        s.ancilla_bits()
                    ),
                });
            }
        }
        let mut out = s.clone();
        self.apply_in_place(&mut out);
        Ok(out)
    }

    /// Apply and charge the operator's cost class to the ledger.
    pub fn apply_counted(&self, s: &StateVector, ledger: &mut CostLedger) -> Result<StateVector> {
        match self.kind {
            OpKind::WalkCall => ledger.charge_walk_calls(self.charge),
            OpKind::DiffusionCall => ledger.charge_diffusion_calls(self.charge),
            OpKind::Untagged => {}
        }
        self.apply(s)
    }

    pub(crate) fn apply_in_place(&self, s: &mut StateVector) {
        let n = s.n;
        let d = self.dim;
        let slices = s.amps.len() / d;
        match &self.rule {
            Rule::Identity => {}
            Rule::Dense(m) => {
                let mut scratch = vec![Complex64::ZERO; d];
                for sl in 0..slices {
                    let block = &mut s.amps[sl * d..(sl + 1) * d];
                    for (r, out) in scratch.iter_mut().enumerate() {
                        let row = &m[r * d..(r + 1) * d];
                        *out = row
                            .iter()
                            .zip(block.iter())
                            .map(|(a, b)| a * b)
                            .sum();
                    }
                    block.copy_from_slice(&scratch);
                }
            }
            Rule::BlockDiffusion { blocks, adjoint } => {
                let mut scratch = vec![Complex64::ZERO; n];
                for sl in 0..slices {
                    let block = &mut s.amps[sl * d..(sl + 1) * d];
                    for i in 0..n {
                        let h = &blocks[i];
                        let x = &block[i * n..(i + 1) * n];
                        for (r, out) in scratch.iter_mut().enumerate() {
                            let mut acc = Complex64::ZERO;
                            if *adjoint {
                                for (c, xv) in x.iter().enumerate() {
                                    acc += xv * h[c * n + r];
                                }
                            } else {
                                let row = &h[r * n..(r + 1) * n];
                                for (c, xv) in x.iter().enumerate() {
                                    acc += xv * row[c];
                                }
                            }
                            *out = acc;
                        }
                        block[i * n..(i + 1) * n].copy_from_slice(&scratch);
                    }
                }
            }
            Rule::SwapRegisters => {
                for sl in 0..slices {
                    let block = &mut s.amps[sl * d..(sl + 1) * d];
                    for i in 0..n {
                        for j in 0..i {
                            block.swap(i * n + j, j * n + i);
                        }
                    }
                }
            }
            Rule::ZeroReflector(which) => {
                for (idx, amp) in s.amps.iter_mut().enumerate() {
                    if register_value(idx % d, n, *which) != 0 {
                        *amp = -*amp;
                    }
                }
            }
            Rule::MarkedFlip(marked) => {
                for (idx, amp) in s.amps.iter_mut().enumerate() {
                    if marked[register_value(idx % d, n, Register::I)] {
                        *amp = -*amp;
                    }
                }
            }
            Rule::ReflectAbout(t) => {
                for sl in 0..slices {
                    let block = &mut s.amps[sl * d..(sl + 1) * d];
                    let c: Complex64 = t
                        .amps
                        .iter()
                        .zip(block.iter())
                        .map(|(a, b)| a.conj() * b)
                        .sum();
                    let c2 = c * 2.0;
                    for (amp, tv) in block.iter_mut().zip(t.amps.iter()) {
                        *amp = c2 * tv - *amp;
                    }
                }
            }
            Rule::Composed(parts) => {
                for p in parts.iter() {
                    p.apply_in_place(s);
                }
            }
            Rule::Extended(rule) => rule.apply(s),
        }
    }

    /// Dense matrix of this operator on the bare walk space, for tests.
    pub fn to_dense(&self) -> Vec<Complex64> {
        let d = self.dim;
        let n = (d as f64).sqrt().round() as usize;
        let mut m = vec![Complex64::ZERO; d * d];
        for col in 0..d {
            let mut e = StateVector::raw(n, 0, vec![Complex64::ZERO; d]);
            e.amps[col] = Complex64::ONE;
            self.apply_in_place(&mut e);
            for row in 0..d {
                m[row * d + col] = e.amps[row];
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_state(n: usize, rng: &mut RngStream) -> StateVector {
        let d = n * n;
        let mut amps: Vec<Complex64> =
            (0..d).map(|_| Complex64::new(rng.normal(), rng.normal())).collect();
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        for a in &mut amps {
            *a /= norm;
        }
        StateVector::raw(n, 0, amps)
    }

    #[test]
    fn identity_and_zero_reflector_examples() {
        let s = StateVector::basis(2, 0, 0);
        let id = LinearOperator::identity(4);
        assert!((fidelity(&id.apply(&s).unwrap(), &s).unwrap() - 1.0).abs() < 1e-14);

        let z = LinearOperator::zero_reflector(2, Register::II);
        let fixed = z.apply(&s).unwrap();
        assert!((overlap(&fixed, &s).unwrap().re - 1.0).abs() < 1e-14);
        let s1 = StateVector::basis(2, 0, 1);
        let negated = z.apply(&s1).unwrap();
        assert!((overlap(&negated, &s1).unwrap().re + 1.0).abs() < 1e-14);
    }

    #[test]
    fn apply_counts_cost_class() {
        let mut ledger = CostLedger::new();
        let s = StateVector::basis(2, 0, 0);
        let walk = LinearOperator::identity(4).with_kind(OpKind::WalkCall);
        let diff = LinearOperator::identity(4).with_kind(OpKind::DiffusionCall);
        walk.apply_counted(&s, &mut ledger).unwrap();
        walk.apply_counted(&s, &mut ledger).unwrap();
        diff.apply_counted(&s, &mut ledger).unwrap();
        assert_eq!(ledger.total().walk_calls, 2);
        assert_eq!(ledger.total().diffusion_calls, 1);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let s = StateVector::basis(3, 0, 0);
        let id = LinearOperator::identity(4);
        assert!(matches!(id.apply(&s), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn measure_point_mass_register_i() {
        let mut rng = RngStream::new(7);
        let s = StateVector::basis(3, 2, 0);
        let (outcome, post) = measure_register(&s, Register::I, &mut rng);
        assert_eq!(outcome, 2);
        assert!((fidelity(&post, &s).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn measure_uniform_register_i_frequencies() {
        let n = 4;
        let amps: Vec<f64> = (0..n * n)
            .map(|idx| if idx % n == 0 { 0.5 } else { 0.0 })
            .collect();
        let s = StateVector::from_real_walk(n, &amps).unwrap();
        let mut rng = RngStream::new(11);
        let shots = 10_000;
        let mut counts = [0u32; 4];
        for _ in 0..shots {
            let (o, _) = measure_register(&s, Register::I, &mut rng);
            counts[o] += 1;
        }
        let sigma = (0.25 * 0.75 / shots as f64).sqrt();
        for &c in &counts {
            let freq = c as f64 / shots as f64;
            assert!((freq - 0.25).abs() < 4.0 * sigma + 1e-9, "freq {freq}");
        }
    }

    #[test]
    fn zero_projection_measurement() {
        let s = StateVector::from_real_walk(
            2,
            &[0.5f64.sqrt(), 0.5f64.sqrt(), 0.0, 0.0],
        )
        .unwrap();
        let mut rng = RngStream::new(3);
        let mut zeros = 0;
        let shots = 10_000;
        for _ in 0..shots {
            let (z, post) = measure_register_is_zero(&s, Register::II, &mut rng);
            if z {
                zeros += 1;
                assert!((post.amps()[0].re - 1.0).abs() < 1e-12);
            }
        }
        let freq = zeros as f64 / shots as f64;
        let sigma = (0.5 * 0.5 / shots as f64).sqrt();
        assert!((freq - 0.5).abs() < 4.0 * sigma);
    }

    #[test]
    fn overlap_and_trace_distance_examples() {
        let mut rng = RngStream::new(5);
        let s = random_state(3, &mut rng);
        assert!((overlap(&s, &s).unwrap().re - 1.0).abs() < 1e-12);
        let a = StateVector::basis(2, 0, 0);
        let b = StateVector::basis(2, 1, 1);
        assert_eq!(overlap(&a, &b).unwrap(), Complex64::ZERO);
        assert!((trace_distance_pure(&a, &a).unwrap()).abs() < 1e-12);
        assert!((trace_distance_pure(&a, &b).unwrap() - 1.0).abs() < 1e-12);

        let mixed = StateVector::from_amps(
            2,
            0,
            vec![
                Complex64::new(0.75f64.sqrt(), 0.0),
                Complex64::new(0.25f64.sqrt(), 0.0),
                Complex64::ZERO,
                Complex64::ZERO,
            ],
        )
        .unwrap();
        assert!((trace_distance_pure(&mixed, &a).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn swap_and_marked_flip() {
        let swap = LinearOperator::swap_registers(3);
        let s = swap.apply(&StateVector::basis(3, 1, 2)).unwrap();
        assert!((fidelity(&s, &StateVector::basis(3, 2, 1)).unwrap() - 1.0).abs() < 1e-12);

        let flip = LinearOperator::marked_flip(2, vec![true, false]);
        let m = StateVector::basis(2, 0, 0);
        assert!((overlap(&flip.apply(&m).unwrap(), &m).unwrap().re + 1.0).abs() < 1e-12);
        let u = StateVector::basis(2, 1, 0);
        assert!((overlap(&flip.apply(&u).unwrap(), &u).unwrap().re - 1.0).abs() < 1e-12);
        let twice = flip.apply(&flip.apply(&m).unwrap()).unwrap();
        assert!((overlap(&twice, &m).unwrap().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reflect_about_is_involutive_and_fixes_target() {
        let mut rng = RngStream::new(9);
        let t = random_state(2, &mut rng);
        let r = LinearOperator::reflect_about(t.clone());
        let fixed = r.apply(&t).unwrap();
        assert!((fidelity(&fixed, &t).unwrap() - 1.0).abs() < 1e-10);
        for _ in 0..20 {
            let s = random_state(2, &mut rng);
            let rr = r.apply(&r.apply(&s).unwrap()).unwrap();
            assert!((fidelity(&rr, &s).unwrap() - 1.0).abs() < 1e-10);
            assert!((r.apply(&s).unwrap().norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn ancilla_attach_detach_roundtrip() {
        let mut rng = RngStream::new(13);
        let s = random_state(2, &mut rng);
        let ext = s.attach_ancillas(3);
        assert_eq!(ext.dim(), 4 * 8);
        assert_eq!(ext.ancilla_bits(), 3);
        let back = ext.detach_ancillas().unwrap();
        assert!((fidelity(&back, &s).unwrap() - 1.0).abs() < 1e-12);

        let z = LinearOperator::zero_reflector(2, Register::I);
        let still = z.apply(&ext).unwrap();
        assert_eq!(still.dim(), 32);
    }

    #[test]
    fn measure_ancilla_register() {
        let s = StateVector::basis(2, 1, 0).attach_ancillas(2);
        let mut rng = RngStream::new(1);
        let (a, _) = measure_register(&s, Register::Ancilla, &mut rng);
        assert_eq!(a, 0);
    }

    #[test]
    fn adjoint_inverts_composed_unitaries() {
        let mut rng = RngStream::new(17);
        let t = random_state(2, &mut rng);
        let op = LinearOperator::composed(vec![
            LinearOperator::swap_registers(2),
            LinearOperator::reflect_about(t),
            LinearOperator::zero_reflector(2, Register::I),
        ]);
        let adj = op.adjoint();
        for _ in 0..10 {
            let s = random_state(2, &mut rng);
            let roundtrip = adj.apply(&op.apply(&s).unwrap()).unwrap();
            assert!((fidelity(&roundtrip, &s).unwrap() - 1.0).abs() < 1e-10);
        }
    }
}
