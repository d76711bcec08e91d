use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::PotentialModel;

use super::ensemble::{Particle, ParticleEnsemble};
use super::rng::{stream, Purpose};

/// Unnormalised density `exp(-β[(1-ζ)Φ_coarse + ζΦ_fine])` with respect to
/// the prior. Levels are 0-based; `level_coarse == level_fine` outside a
/// bridge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetDensity {
    pub beta: f64,
    pub zeta: f64,
    pub level_coarse: usize,
    pub level_fine: usize,
}

impl TargetDensity {
    pub fn tempered(level: usize, beta: f64) -> Self {
        Self {
            beta,
            zeta: 1.0,
            level_coarse: level,
            level_fine: level,
        }
    }

    pub fn bridge(level_coarse: usize, level_fine: usize, beta: f64, zeta: f64) -> Self {
        Self {
            beta,
            zeta,
            level_coarse,
            level_fine,
        }
    }

    /// Levels whose potentials the density depends on.
    pub fn levels(&self) -> Vec<usize> {
        if self.beta == 0.0 {
            Vec::new()
        } else if self.level_coarse == self.level_fine {
            vec![self.level_fine]
        } else {
            vec![self.level_coarse, self.level_fine]
        }
    }

    /// `β Φ_target` of a particle whose potentials are cached.
    pub fn energy(&self, p: &Particle) -> Result<f64> {
        if self.beta == 0.0 {
            return Ok(0.0);
        }
        let get = |l: usize| {
            p.potential(l)
                .ok_or_else(|| Error::Domain(format!("potential at level {} not cached", l + 1)))
        };
        let fine = get(self.level_fine)?;
        if self.level_coarse == self.level_fine {
            return Ok(self.beta * fine);
        }
        let coarse = get(self.level_coarse)?;
        Ok(self.beta * ((1.0 - self.zeta) * coarse + self.zeta * fine))
    }
}

/// Gaussian random-walk proposal `θ' = θ + ξ`, `ξ ~ N(0, σ² I)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MhKernel {
    pub proposal_variance: f64,
}

impl MhKernel {
    /// `σ² = 2.38² / n`.
    pub fn standard(dim: usize) -> Self {
        Self {
            proposal_variance: 2.38 * 2.38 / dim as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutationStats {
    pub accepted: usize,
    /// Model evaluations per 0-based level.
    pub solves: Vec<u64>,
}

/// One random-walk Metropolis step per particle, stationary for `target`
/// times the standard normal prior.
///
/// Current potentials at the target's levels must already be cached. Every
/// proposal is evaluated at all of the target's levels, so one call costs
/// exactly `J` solves per level in [`TargetDensity::levels`].
pub fn mh_mutate<M: PotentialModel>(
    ens: &mut ParticleEnsemble,
    model: &M,
    target: &TargetDensity,
    kernel: &MhKernel,
    seed: u64,
    step: u64,
) -> Result<MutationStats> {
    let levels = target.levels();
    let sd = kernel.proposal_variance.max(0.0).sqrt();
    let n_levels = ens.n_levels();
    let outcome: Vec<Result<bool>> = ens
        .particles_mut()
        .par_iter_mut()
        .enumerate()
        .map(|(j, p)| {
            let mut rng = stream(seed, step, Purpose::Mutate, j as u64);
            let mut prop = Particle::new(
                p.theta
                    .iter()
                    .map(|t| t + sd * rng.sample::<f64, _>(StandardNormal))
                    .collect(),
                n_levels,
            );
            let u: f64 = rng.gen();
            for &l in &levels {
                let v = model.potential(l, &prop.theta)?;
                if !v.is_finite() {
                    return Err(Error::Numeric(format!("non-finite potential {v} at level {}", l + 1)));
                }
                prop.set_potential(l, v);
            }
            let sq = |t: &[f64]| t.iter().map(|x| x * x).sum::<f64>();
            let log_alpha = target.energy(p)? - target.energy(&prop)? - 0.5 * (sq(&prop.theta) - sq(&p.theta));
            if log_alpha >= 0.0 || u < log_alpha.exp() {
                *p = prop;
                Ok(true)
            } else {
                Ok(false)
            }
        })
        .collect();
    let mut accepted = 0;
    for r in outcome {
        accepted += usize::from(r?);
    }
    let mut solves = vec![0; n_levels];
    for l in levels {
        solves[l] = ens.len() as u64;
    }
    Ok(MutationStats { accepted, solves })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinearGaussianModel, ZeroPotential};

    fn moments(e: &ParticleEnsemble, k: usize) -> (f64, f64) {
        let n = e.len() as f64;
        let m = e.particles().iter().map(|p| p.theta[k]).sum::<f64>() / n;
        let v = e.particles().iter().map(|p| (p.theta[k] - m).powi(2)).sum::<f64>() / n;
        (m, v)
    }

    #[test]
    fn prior_is_preserved_at_zero_temperature() {
        let model = ZeroPotential { dim: 3, n_levels: 1 };
        let mut e = ParticleEnsemble::sample_prior(3, 10_000, 1, 3).unwrap();
        let target = TargetDensity::tempered(0, 0.0);
        let kernel = MhKernel::standard(3);
        for s in 0..100 {
            let st = mh_mutate(&mut e, &model, &target, &kernel, 3, s).unwrap();
            assert_eq!(st.solves, vec![0]);
        }
        for k in 0..3 {
            let (m, v) = moments(&e, k);
            assert!(m.abs() <= 0.05, "mean {m}");
            assert!((0.9..=1.1).contains(&v), "var {v}");
        }
    }

    #[test]
    fn zero_proposal_always_accepts() {
        let model = LinearGaussianModel::scalar(2.0, 1.0, 0.1).unwrap();
        let mut e = ParticleEnsemble::sample_prior(1, 50, 1, 1).unwrap();
        e.ensure_potentials(&model, 0, 50).unwrap();
        let before = e.clone();
        let st = mh_mutate(
            &mut e,
            &model,
            &TargetDensity::tempered(0, 1.0),
            &MhKernel { proposal_variance: 0.0 },
            1,
            1,
        )
        .unwrap();
        assert_eq!(st.accepted, 50);
        assert_eq!(st.solves, vec![50]);
        assert_eq!(e, before);
    }

    #[test]
    fn conjugate_gaussian_posterior() {
        let (a, y, g) = (1.0, 1.5, 0.5);
        let model = LinearGaussianModel::scalar(a, y, g).unwrap();
        let mut e = ParticleEnsemble::sample_prior(1, 10_000, 1, 8).unwrap();
        e.ensure_potentials(&model, 0, e.len()).unwrap();
        let target = TargetDensity::tempered(0, 1.0);
        let kernel = MhKernel::standard(1);
        for s in 0..50 {
            mh_mutate(&mut e, &model, &target, &kernel, 8, s).unwrap();
        }
        let pm = model.posterior_mean(0)[0];
        let pv = model.posterior_covariance(0)[0];
        let (m, v) = moments(&e, 0);
        // independent-sample standard errors, inflated for the residual
        // correlation left by 50 sweeps
        let n = e.len() as f64;
        assert!((m - pm).abs() <= 3.0 * (pv / n).sqrt() * 2.0, "mean {m} vs {pm}");
        assert!((v - pv).abs() <= 3.0 * pv * (2.0 / n).sqrt() * 2.0, "var {v} vs {pv}");
    }

    #[test]
    fn bridge_evaluates_both_levels() {
        let model = LinearGaussianModel::new(vec![vec![1.0], vec![1.1]], 0.5, 0.3).unwrap();
        let mut e = ParticleEnsemble::sample_prior(1, 20, 2, 2).unwrap();
        e.ensure_potentials(&model, 0, 20).unwrap();
        e.ensure_potentials(&model, 1, 20).unwrap();
        let st = mh_mutate(
            &mut e,
            &model,
            &TargetDensity::bridge(0, 1, 0.7, 0.4),
            &MhKernel::standard(1),
            2,
            1,
        )
        .unwrap();
        assert_eq!(st.solves, vec![20, 20]);
        assert!(e
            .particles()
            .iter()
            .all(|p| p.potential(0).is_some() && p.potential(1).is_some()));
    }

    #[test]
    fn missing_cache_is_an_error() {
        let model = LinearGaussianModel::scalar(1.0, 0.0, 1.0).unwrap();
        let mut e = ParticleEnsemble::sample_prior(1, 4, 1, 0).unwrap();
        let r = mh_mutate(
            &mut e,
            &model,
            &TargetDensity::tempered(0, 1.0),
            &MhKernel::standard(1),
            0,
            0,
        );
        assert!(r.is_err());
    }
}
