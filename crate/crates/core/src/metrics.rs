//! Accuracy metrics for posterior approximations.

use crate::error::{Error, Result};
use crate::inverse_problem::ForwardModel;
use crate::random_field::FieldSampler;
use crate::smc::EnsembleTable;

/// Values with simplex weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample1D {
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedSample1D {
    /// Normalises `weights`, which must be non-negative and not all zero.
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() != weights.len() {
            return Err(Error::Domain(
                "sample values and weights must be non-empty and of equal length".into(),
            ));
        }
        if values.iter().any(|v| v.is_nan()) || weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Domain("sample contains NaN or negative weights".into()));
        }
        let s: f64 = weights.iter().sum();
        if !(s > 0.0) {
            return Err(Error::Domain("sample weights sum to zero".into()));
        }
        Ok(Self {
            values,
            weights: weights.iter().map(|w| w / s).collect(),
        })
    }

    pub fn equal(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(values, vec![1.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Sorted (value, cumulative weight) breakpoints of the right-continuous ecdf.
    fn steps(&self) -> Vec<(f64, f64)> {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        idx.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]));
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(idx.len());
        let mut cum = 0.0;
        for i in idx {
            cum += self.weights[i];
            match out.last_mut() {
                Some(last) if last.0 == self.values[i] => last.1 = cum,
                _ => out.push((self.values[i], cum)),
            }
        }
        if let Some(last) = out.last_mut() {
            last.1 = 1.0;
        }
        out
    }
}

/// `sup_x |F_a(x) - F_b(x)|` of the weighted ecdfs.
pub fn ks_distance(a: &WeightedSample1D, b: &WeightedSample1D) -> f64 {
    let (sa, sb) = (a.steps(), b.steps());
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0f64, 0.0f64);
    let mut d = 0.0f64;
    while i < sa.len() || j < sb.len() {
        let x = match (sa.get(i), sb.get(j)) {
            (Some(p), Some(q)) => p.0.min(q.0),
            (Some(p), None) => p.0,
            (None, Some(q)) => q.0,
            (None, None) => unreachable!(),
        };
        if i < sa.len() && sa[i].0 == x {
            fa = sa[i].1;
            i += 1;
        }
        if j < sb.len() && sb[j].0 == x {
            fb = sb[j].1;
            j += 1;
        }
        d = d.max((fa - fb).abs());
    }
    d.min(1.0)
}

/// `‖Λ^{1/2}(θ̂ - θ)‖₁ / ‖Λ^{1/2} θ‖₁`.
pub fn rel_err(theta_hat: &[f64], theta_true: &[f64], eigenvalues: &[f64]) -> Result<f64> {
    if theta_hat.len() != theta_true.len() || eigenvalues.len() < theta_true.len() {
        return Err(Error::Domain(
            "coefficient vectors and eigenvalues differ in length".into(),
        ));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for ((h, t), l) in theta_hat.iter().zip(theta_true).zip(eigenvalues) {
        let s = l.sqrt();
        num += (s * (h - t)).abs();
        den += (s * t).abs();
    }
    if den == 0.0 {
        return Err(Error::UndefinedReference(
            "weighted norm of the true coefficients is zero",
        ));
    }
    Ok(num / den)
}

/// `‖y - g‖² / ‖y‖²`; a diagonal noise covariance `cI` cancels.
pub fn rel_misfit_from_output(g: &[f64], y: &[f64]) -> Result<f64> {
    if g.len() != y.len() {
        return Err(Error::Domain("model output and data differ in length".into()));
    }
    let den: f64 = y.iter().map(|v| v * v).sum();
    if den == 0.0 {
        return Err(Error::UndefinedReference("data vector is zero"));
    }
    let num: f64 = y.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(num / den)
}

/// Relative misfit of the finest-level model output at `theta_hat`.
pub fn rel_misfit(theta_hat: &[f64], model: &ForwardModel, y: &[f64]) -> Result<f64> {
    let g = model.forward(model.n_levels() - 1, theta_hat)?;
    rel_misfit_from_output(&g, y)
}

/// `|log Ẑ - log Z_ref| / |log Z_ref|` with `log Z_ref` the mean of the
/// reference log evidences.
pub fn rel_err_evid(log_z_hat: f64, ref_log_z: &[f64]) -> Result<f64> {
    if ref_log_z.is_empty() {
        return Err(Error::Domain("no reference evidences given".into()));
    }
    let r = ref_log_z.iter().sum::<f64>() / ref_log_z.len() as f64;
    if r == 0.0 {
        return Err(Error::UndefinedReference("reference log evidence is zero"));
    }
    Ok((log_z_hat - r).abs() / r.abs())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Marginal {
    /// 0-based KL coefficient index.
    KlIndex(usize),
    Point([f64; 2]),
}

/// One-dimensional marginal of a weighted ensemble. `sampler` is needed
/// for point marginals only.
pub fn marginal(ensemble: &EnsembleTable, which: Marginal, sampler: Option<&FieldSampler>) -> Result<WeightedSample1D> {
    let values = match which {
        Marginal::KlIndex(n) => ensemble.column(n)?,
        Marginal::Point(_) => {
            let s = sampler.ok_or_else(|| Error::Domain("point marginal needs a field sampler".into()))?;
            if s.len() != 1 || s.n_sto() != ensemble.dim() {
                return Err(Error::Domain(
                    "sampler must evaluate one point in the ensemble's dimension".into(),
                ));
            }
            ensemble.thetas.iter().map(|t| s.evaluate(t)[0]).collect()
        }
    };
    WeightedSample1D::new(values, ensemble.weights.clone())
}

/// Mean and population standard deviation.
pub fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
    (m, v.sqrt())
}
