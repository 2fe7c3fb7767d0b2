//! Resource accounting for simulated quantum procedures.
//!
//! The simulator charges each walk-operator application, each reflection
//! about the chain's coherent encoding, and each projective measurement to a
//! [`CostLedger`]. Experiments thread a ledger through explicitly so that
//! parallel trials can each own one.

/// Running totals for one unit of work (a step, a trial, a whole run).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepCost {
    /// Applications of the walk operator or its inverse, including all
    /// controlled applications inside phase detection.
    pub walk_calls: u64,
    /// Applications of the column/row diffusion operators outside full walk
    /// steps (coherent-encoding maps and their inverses).
    pub diffusion_calls: u64,
    /// Two-outcome projective measurements performed.
    pub projective_measurements: u64,
    /// Amplitude-amplification iterations performed.
    pub amplification_iterations: u64,
    /// Protocol steps completed.
    pub wall_steps: u64,
}

impl StepCost {
    pub fn add(&mut self, other: &StepCost) {
        self.walk_calls += other.walk_calls;
        self.diffusion_calls += other.diffusion_calls;
        self.projective_measurements += other.projective_measurements;
        self.amplification_iterations += other.amplification_iterations;
        self.wall_steps += other.wall_steps;
    }
}

/// Accumulates costs and supports checkpoint/diff so callers can attribute
/// spending to a region of code.
#[derive(Debug, Clone, Default)]
pub struct CostLedger {
    total: StepCost,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn total(&self) -> StepCost {
        self.total
    }

    pub fn charge_walk_calls(&mut self, n: u64) {
        self.total.walk_calls += n;
    }

    pub fn charge_diffusion_calls(&mut self, n: u64) {
        self.total.diffusion_calls += n;
    }

    pub fn charge_projective_measurement(&mut self) {
        self.total.projective_measurements += 1;
    }

    pub fn charge_amplification_iterations(&mut self, n: u64) {
        self.total.amplification_iterations += n;
    }

    pub fn charge_wall_step(&mut self) {
        self.total.wall_steps += 1;
    }

    /// Snapshot for later [`Self::since`].
    pub fn checkpoint(&self) -> StepCost {
        self.total
    }

    /// Costs accrued since `mark` was taken.
    pub fn since(&self, mark: &StepCost) -> StepCost {
        StepCost {
            walk_calls: self.total.walk_calls - mark.walk_calls,
            diffusion_calls: self.total.diffusion_calls - mark.diffusion_calls,
            projective_measurements: self.total.projective_measurements
                - mark.projective_measurements,
            amplification_iterations: self.total.amplification_iterations
                - mark.amplification_iterations,
            wall_steps: self.total.wall_steps - mark.wall_steps,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_diff() {
        let mut ledger = CostLedger::new();
        ledger.charge_walk_calls(5);
        let mark = ledger.checkpoint();
        ledger.charge_walk_calls(3);
        ledger.charge_projective_measurement();
        let d = ledger.since(&mark);
        assert_eq!(d.walk_calls, 3);
        assert_eq!(d.projective_measurements, 1);
        assert_eq!(ledger.total().walk_calls, 8);
    }
}
