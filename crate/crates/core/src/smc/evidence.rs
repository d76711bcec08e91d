use crate::error::Result;

use super::weights::UpdateWeights;

/// Running estimate of `log Z` as a sum of log mean update weights.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EvidenceAccumulator {
    log_evidence: f64,
}

impl EvidenceAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `log(mean_j w_j)` of the raw weights and returns the increment.
    pub fn step(&mut self, w: &UpdateWeights) -> Result<f64> {
        let inc = w.log_mean()?;
        self.log_evidence += inc;
        Ok(inc)
    }

    pub fn log_evidence(&self) -> f64 {
        self.log_evidence
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smc::weights::temper_update_weights;

    #[test]
    fn increments() {
        let mut acc = EvidenceAccumulator::new();
        let w = temper_update_weights(&[0.0, 2f64.ln()], 1.0).unwrap();
        let inc = acc.step(&w).unwrap();
        assert!((inc - 0.75f64.ln()).abs() < 1e-15);
        let w = temper_update_weights(&[0.0; 4], 0.5).unwrap();
        assert_eq!(acc.step(&w).unwrap(), 0.0);
        assert!((acc.log_evidence() - 0.75f64.ln()).abs() < 1e-15);
    }
}
