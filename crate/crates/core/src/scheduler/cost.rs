use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PotentialModel;

use super::{StepRecord, UpdateKind};

/// `C_ℓ = 2^{d(ℓ - N_L)}` for `ℓ = 1..=N_L`.
pub fn cost_levels(d: u32, n_levels: usize) -> Result<Vec<f64>> {
    if !(1..=3).contains(&d) {
        return Err(Error::Config(format!("spatial dimension must be 1, 2 or 3, got {d}")));
    }
    if n_levels == 0 {
        return Err(Error::Config("at least one level is required".into()));
    }
    let top = n_levels as i32;
    Ok((1..=top).map(|l| 2f64.powi(d as i32 * (l - top))).collect())
}

/// Relative cost of one model evaluation per level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub d: u32,
    costs: Vec<f64>,
}

impl CostModel {
    pub fn geometric(d: u32, n_levels: usize) -> Result<Self> {
        Ok(Self {
            d,
            costs: cost_levels(d, n_levels)?,
        })
    }

    /// User-supplied costs; only positivity is checked.
    pub fn custom(costs: Vec<f64>) -> Result<Self> {
        if costs.is_empty() || costs.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
            return Err(Error::Config("level costs must be positive and finite".into()));
        }
        Ok(Self { d: 0, costs })
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn n_levels(&self) -> usize {
        self.costs.len()
    }

    /// `Σ_ℓ n_ℓ C_ℓ`.
    pub fn weigh(&self, solves: &[u64]) -> f64 {
        solves.iter().zip(&self.costs).map(|(n, c)| *n as f64 * c).sum()
    }
}

/// Total cost of an update history:
/// `Σ_ITU J C_B(s) + Σ_LU J (C_B(s) + N_B (C_B(s) + C_B(s-1)))`.
pub fn predicted_cost(history: &[StepRecord], j: usize, cost: &CostModel) -> f64 {
    let c = cost.costs();
    let j = j as f64;
    history
        .iter()
        .map(|h| match h.kind {
            UpdateKind::Itu => j * c[h.level],
            UpdateKind::Lu => j * (c[h.level] + h.n_bridge as f64 * (c[h.level] + c[h.level - 1])),
        })
        .sum()
}

/// Counts every potential evaluation per level.
pub(crate) struct Counting<'a, M> {
    inner: &'a M,
    counts: Vec<AtomicU64>,
}

impl<'a, M: PotentialModel> Counting<'a, M> {
    pub fn new(inner: &'a M) -> Self {
        Self {
            inner,
            counts: (0..inner.n_levels()).map(|_| AtomicU64::new(0)).collect(),
        }
    }

    pub fn counts(&self) -> Vec<u64> {
        self.counts.iter().map(|c| c.load(Ordering::Relaxed)).collect()
    }
}

impl<M: PotentialModel> PotentialModel for Counting<'_, M> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn n_levels(&self) -> usize {
        self.inner.n_levels()
    }

    fn potential(&self, level: usize, coeffs: &[f64]) -> Result<f64> {
        self.counts[level].fetch_add(1, Ordering::Relaxed);
        self.inner.potential(level, coeffs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(kind: UpdateKind, level: usize, n_bridge: usize) -> StepRecord {
        StepRecord {
            s: 0,
            kind,
            k: 0,
            level,
            beta: 1.0,
            n_bridge,
            ess: 0.0,
            cv: 0.0,
        }
    }

    #[test]
    fn geometric_costs() {
        let c = cost_levels(2, 5).unwrap();
        assert_eq!(c, vec![2f64.powi(-8), 2f64.powi(-6), 2f64.powi(-4), 2f64.powi(-2), 1.0]);
        assert_eq!(cost_levels(1, 1).unwrap(), vec![1.0]);
        for d in 1..=3 {
            let c = cost_levels(d, 6).unwrap();
            for w in c.windows(2) {
                assert_eq!(w[1] / w[0], 2f64.powi(d as i32));
            }
        }
        assert!(cost_levels(4, 2).is_err());
    }

    #[test]
    fn single_level_formula() {
        let cost = CostModel::geometric(2, 1).unwrap();
        let h: Vec<_> = (0..7).map(|_| step(UpdateKind::Itu, 0, 0)).collect();
        assert_eq!(predicted_cost(&h, 100, &cost), 700.0);
    }

    #[test]
    fn one_level_update() {
        let cost = CostModel::custom(vec![0.25, 1.0]).unwrap();
        let h = vec![step(UpdateKind::Lu, 1, 1)];
        assert_eq!(predicted_cost(&h, 10, &cost), 10.0 * (1.0 + 0.25 + 1.0));
    }
}
