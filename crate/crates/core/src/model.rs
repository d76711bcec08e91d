//! The interface samplers use to evaluate potentials on a level hierarchy.

use crate::error::{Error, Result};

/// A family of potentials `Φ_ℓ` (negative log-likelihoods) with respect to a
/// standard normal prior on `R^dim`, one per discretisation level.
///
/// Levels are 0-based: `0` is the coarsest, `n_levels() - 1` the finest.
/// Implementations must be deterministic and safe to call concurrently.
pub trait PotentialModel: Sync {
    fn dim(&self) -> usize;

    fn n_levels(&self) -> usize;

    fn potential(&self, level: usize, coeffs: &[f64]) -> Result<f64>;
}

impl<M: PotentialModel + ?Sized> PotentialModel for &M {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn n_levels(&self) -> usize {
        (**self).n_levels()
    }

    fn potential(&self, level: usize, coeffs: &[f64]) -> Result<f64> {
        (**self).potential(level, coeffs)
    }
}

/// `Φ ≡ 0` on every level: the posterior equals the prior and `Z = 1`.
#[derive(Debug, Clone, Copy)]
pub struct ZeroPotential {
    pub dim: usize,
    pub n_levels: usize,
}

impl PotentialModel for ZeroPotential {
    fn dim(&self) -> usize {
        self.dim
    }

    fn n_levels(&self) -> usize {
        self.n_levels
    }

    fn potential(&self, _level: usize, _coeffs: &[f64]) -> Result<f64> {
        Ok(0.0)
    }
}

/// Scalar linear observation `y = a_ℓ · θ + η`, `η ~ N(0, γ²)`.
///
/// Each level has its own gain vector, which gives a cheap multilevel
/// hierarchy with known posteriors on every level.
#[derive(Debug, Clone)]
pub struct LinearGaussianModel {
    gains: Vec<Vec<f64>>,
    y: f64,
    gamma_std: f64,
}

impl LinearGaussianModel {
    pub fn new(gains: Vec<Vec<f64>>, y: f64, gamma_std: f64) -> Result<Self> {
        let dim = gains.first().map(Vec::len).unwrap_or(0);
        if dim == 0 || gains.iter().any(|g| g.len() != dim) {
            return Err(Error::Config(
                "gain vectors must be non-empty and of equal length".into(),
            ));
        }
        if !(gamma_std > 0.0) {
            return Err(Error::Config(format!("noise std must be positive, got {gamma_std}")));
        }
        Ok(Self { gains, y, gamma_std })
    }

    /// One level, one parameter: `G(θ) = a θ`.
    pub fn scalar(a: f64, y: f64, gamma_std: f64) -> Result<Self> {
        Self::new(vec![vec![a]], y, gamma_std)
    }

    fn total_variance(&self, level: usize) -> f64 {
        let a2: f64 = self.gains[level].iter().map(|a| a * a).sum();
        a2 + self.gamma_std * self.gamma_std
    }

    /// Exact posterior mean of `θ` on `level`.
    pub fn posterior_mean(&self, level: usize) -> Vec<f64> {
        let s = self.y / self.total_variance(level);
        self.gains[level].iter().map(|a| a * s).collect()
    }

    /// Exact posterior covariance of `θ` on `level`, row-major.
    pub fn posterior_covariance(&self, level: usize) -> Vec<f64> {
        let a = &self.gains[level];
        let d = a.len();
        let v = self.total_variance(level);
        let mut c = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                c[i * d + j] = f64::from(u8::from(i == j)) - a[i] * a[j] / v;
            }
        }
        c
    }

    /// `log Z = log E_prior[exp(-Φ)]`, with `Φ` excluding the Gaussian
    /// normalising constant.
    pub fn log_evidence(&self, level: usize) -> f64 {
        let v = self.total_variance(level);
        0.5 * (self.gamma_std * self.gamma_std / v).ln() - self.y * self.y / (2.0 * v)
    }
}

impl PotentialModel for LinearGaussianModel {
    fn dim(&self) -> usize {
        self.gains[0].len()
    }

    fn n_levels(&self) -> usize {
        self.gains.len()
    }

    fn potential(&self, level: usize, coeffs: &[f64]) -> Result<f64> {
        let g: f64 = self.gains[level].iter().zip(coeffs).map(|(a, t)| a * t).sum();
        Ok((self.y - g).powi(2) / (2.0 * self.gamma_std * self.gamma_std))
    }
}
