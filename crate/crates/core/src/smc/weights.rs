//! Importance weights of tempering and bridging updates, their coefficient
//! of variation, and the adaptive choice of the next inverse temperature.

use crate::error::{Error, Result};

/// Raw weights below this value count as numerically zero.
pub const SINGULAR_THRESHOLD: f64 = 1e-300;

/// Absolute tolerance of the bisection in [`solve_next_parameter`].
pub const BISECTION_TOL: f64 = 1e-10;

/// Unnormalised update weights stored as `raw_j = scaled_j · exp(log_shift)`
/// with `max_j scaled_j = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateWeights {
    scaled: Vec<f64>,
    log_shift: f64,
}

impl UpdateWeights {
    /// Weights `exp(-step · d_j)`, shifted by `min d` before exponentiation.
    pub fn exponential(step: f64, d: &[f64]) -> Self {
        let min = d.iter().copied().fold(f64::INFINITY, f64::min);
        let scaled = d.iter().map(|x| (-step * (x - min)).exp()).collect();
        Self {
            scaled,
            log_shift: -step * min,
        }
    }

    pub fn len(&self) -> usize {
        self.scaled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scaled.is_empty()
    }

    /// Weights up to the common factor `exp(log_shift)`.
    pub fn scaled(&self) -> &[f64] {
        &self.scaled
    }

    pub fn log_shift(&self) -> f64 {
        self.log_shift
    }

    /// The weights without the overflow guard (may under- or overflow).
    pub fn raw(&self) -> Vec<f64> {
        let f = self.log_shift.exp();
        self.scaled.iter().map(|w| w * f).collect()
    }

    /// True when every raw weight is below [`SINGULAR_THRESHOLD`].
    pub fn is_numerically_singular(&self) -> bool {
        let max = self.scaled.iter().copied().fold(0.0, f64::max);
        max == 0.0 || max.ln() + self.log_shift < SINGULAR_THRESHOLD.ln()
    }

    /// `log(mean_j raw_j)`.
    pub fn log_mean(&self) -> Result<f64> {
        let mean = self.scaled.iter().sum::<f64>() / self.scaled.len() as f64;
        if !(mean > 0.0) {
            return Err(Error::singular("all update weights are zero"));
        }
        Ok(mean.ln() + self.log_shift)
    }

    pub fn cv(&self) -> Result<f64> {
        coefficient_of_variation(&self.scaled)
    }

    pub fn ess(&self) -> Result<f64> {
        ess(&self.scaled)
    }

    /// Weights divided by their sum.
    pub fn normalized(&self) -> Result<Vec<f64>> {
        let s: f64 = self.scaled.iter().sum();
        if !(s > 0.0) {
            return Err(Error::singular("weights cannot be normalised"));
        }
        Ok(self.scaled.iter().map(|w| w / s).collect())
    }
}

/// Population standard deviation over mean.
pub fn coefficient_of_variation(w: &[f64]) -> Result<f64> {
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(Error::singular("all weights are zero"));
    }
    let var = w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    Ok(var.sqrt() / mean)
}

/// `J / (1 + cv²)` of non-negative unnormalised weights.
pub fn ess(w: &[f64]) -> Result<f64> {
    if w.iter().any(|x| *x < 0.0 || x.is_nan()) {
        return Err(Error::Domain("weights must be non-negative".into()));
    }
    let cv = coefficient_of_variation(w)?;
    Ok(w.len() as f64 / (1.0 + cv * cv))
}

/// Tempering weights `exp(-δβ Φ_j)`.
pub fn temper_update_weights(phi: &[f64], delta_beta: f64) -> Result<UpdateWeights> {
    if !(delta_beta > 0.0) {
        return Err(Error::Domain(format!(
            "temperature step must be positive, got {delta_beta}"
        )));
    }
    Ok(UpdateWeights::exponential(delta_beta, phi))
}

/// Bridging weights `exp(-β δζ (Φ_fine,j − Φ_coarse,j))`.
pub fn bridge_update_weights(
    phi_fine: &[f64],
    phi_coarse: &[f64],
    beta: f64,
    delta_zeta: f64,
) -> Result<UpdateWeights> {
    if !(delta_zeta > 0.0) {
        return Err(Error::Domain(format!(
            "bridging step must be positive, got {delta_zeta}"
        )));
    }
    if phi_fine.len() != phi_coarse.len() {
        return Err(Error::Domain("potential vectors differ in length".into()));
    }
    let diff: Vec<f64> = phi_fine.iter().zip(phi_coarse).map(|(f, c)| beta * (f - c)).collect();
    Ok(UpdateWeights::exponential(delta_zeta, &diff))
}

/// Next value `x ∈ (current, 1]` of a tempering or bridging parameter with
/// weights `exp(-(x - current) d_j)`.
///
/// Returns 1 when the full step already meets the target cv. Otherwise the
/// smallest root of `cv(x) = target` on `[min(current + min_step, 1), 1]` is
/// bracketed by bisection to [`BISECTION_TOL`]; the lower bracket end is
/// returned so the realised cv never exceeds the target. If even the
/// minimum step overshoots, the minimum step is returned.
pub fn solve_next_parameter(d: &[f64], current: f64, target_cv: f64, min_step: f64) -> f64 {
    if current >= 1.0 {
        return 1.0;
    }
    let (min, max) = d.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        (lo.min(*x), hi.max(*x))
    });
    if !(max > min) {
        return 1.0;
    }
    let cv_at = |x: f64| {
        let w = UpdateWeights::exponential(x - current, d);
        coefficient_of_variation(w.scaled()).unwrap_or(f64::INFINITY)
    };
    if cv_at(1.0) <= target_cv {
        return 1.0;
    }
    let lo = (current + min_step).min(1.0);
    if lo >= 1.0 || cv_at(lo) >= target_cv {
        return lo;
    }
    let (mut a, mut b) = (lo, 1.0);
    while b - a > BISECTION_TOL {
        let mid = 0.5 * (a + b);
        if cv_at(mid) <= target_cv {
            a = mid;
        } else {
            b = mid;
        }
    }
    a
}
