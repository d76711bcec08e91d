//! The groundwater-flow inverse problem: log-normal conductivity
//! `κ = exp(θ)` with a truncated KL prior, observed through point values of
//! the pressure on a hierarchy of meshes.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::fem::{build_mesh, BoundarySpec, FemSystem, ObservationOperator, SourceSpec};
use crate::model::PotentialModel;
use crate::random_field::{
    compute_kl_basis, sample_prior_coeffs, FieldSampler, KlBasis, MaternParams, QuadratureGrid, Smoothness,
};

/// Standard deviation of the noise added when generating synthetic data.
pub const DATA_NOISE_STD: f64 = 0.1;

/// Largest KL lattice (cells per side) used unless overridden.
pub const DEFAULT_KL_GRID_CAP: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExampleId {
    /// Zero boundary pressure, nine sources, `Γ = 0.07² I`.
    Ex4,
    /// As `Ex4` with `Γ = 0.035² I`.
    Ex5,
    /// Flow cell, short correlation length, `Γ = 0.045² I`.
    Ex6,
}

impl ExampleId {
    pub fn name(self) -> &'static str {
        match self {
            ExampleId::Ex4 => "ex4",
            ExampleId::Ex5 => "ex5",
            ExampleId::Ex6 => "ex6",
        }
    }
}

impl std::str::FromStr for ExampleId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ex4" => Ok(ExampleId::Ex4),
            "ex5" => Ok(ExampleId::Ex5),
            "ex6" => Ok(ExampleId::Ex6),
            _ => Err(Error::Config(format!("unknown example '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseModel {
    /// `γ` in `Γ = γ² I`.
    pub gamma_std: f64,
}

impl NoiseModel {
    pub fn new(gamma_std: f64) -> Result<Self> {
        if !(gamma_std > 0.0 && gamma_std.is_finite()) {
            return Err(Error::Config(format!("noise std must be positive, got {gamma_std}")));
        }
        Ok(Self { gamma_std })
    }

    pub fn variance(&self) -> f64 {
        self.gamma_std * self.gamma_std
    }
}

/// Interior observation lattice for an example.
pub fn observation_layout(example: ExampleId) -> Vec<[f64; 2]> {
    let n = match example {
        ExampleId::Ex4 | ExampleId::Ex5 => 6,
        ExampleId::Ex6 => 8,
    };
    let mut pts = Vec::with_capacity((n - 1) * (n - 1));
    for j in 1..n {
        for i in 1..n {
            pts.push([i as f64 / n as f64, j as f64 / n as f64]);
        }
    }
    pts
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub example: ExampleId,
    pub prior: MaternParams,
    /// Constant prior mean `m₀`.
    pub prior_mean: f64,
    pub n_sto: usize,
    /// Cells per side of each mesh, coarsest first.
    pub hierarchy: Vec<usize>,
    pub boundary: BoundarySpec,
    pub source: SourceSpec,
    pub observation_points: Vec<[f64; 2]>,
    pub noise: NoiseModel,
    pub data_noise_std: f64,
    pub kl_grid_cap: usize,
}

impl ProblemSpec {
    /// Settings of an example on the reduced desk-scale hierarchy.
    pub fn desk(example: ExampleId) -> Self {
        let mut spec = Self::full(example);
        spec.hierarchy = match example {
            ExampleId::Ex4 | ExampleId::Ex5 => vec![8, 16, 32],
            ExampleId::Ex6 => vec![16, 32],
        };
        spec
    }

    /// Settings of an example on its full five-level hierarchy.
    pub fn full(example: ExampleId) -> Self {
        let ex46 = |lambda, mean, n_sto, hierarchy: Vec<usize>, boundary, source, gamma| ProblemSpec {
            example,
            prior: MaternParams::new(1.0, lambda, Smoothness::ThreeHalves).expect("valid prior"),
            prior_mean: mean,
            n_sto,
            hierarchy,
            boundary,
            source,
            observation_points: observation_layout(example),
            noise: NoiseModel { gamma_std: gamma },
            data_noise_std: DATA_NOISE_STD,
            kl_grid_cap: DEFAULT_KL_GRID_CAP,
        };
        match example {
            ExampleId::Ex4 | ExampleId::Ex5 => ex46(
                0.65,
                0.0,
                10,
                vec![8, 16, 32, 64, 128],
                BoundarySpec::AllDirichletZero,
                SourceSpec::NineGaussians,
                if example == ExampleId::Ex4 { 0.07 } else { 0.035 },
            ),
            ExampleId::Ex6 => ex46(
                0.1,
                2.0,
                320,
                vec![16, 32, 64, 128, 256],
                BoundarySpec::FlowCell,
                SourceSpec::Zero,
                0.045,
            ),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hierarchy.is_empty() || self.hierarchy.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "mesh hierarchy must be non-empty and strictly increasing, got {:?}",
                self.hierarchy
            )));
        }
        if self.hierarchy[0] < 2 {
            return Err(Error::Config("coarsest mesh needs at least 2 cells per side".into()));
        }
        if self.n_sto < 1 {
            return Err(Error::Config("at least one KL mode is required".into()));
        }
        if self.kl_grid_cap < 1 {
            return Err(Error::Config("KL grid cap must be positive".into()));
        }
        if let Some(p) = self
            .observation_points
            .iter()
            .find(|p| !(p[0] > 0.0 && p[0] < 1.0 && p[1] > 0.0 && p[1] < 1.0))
        {
            return Err(Error::Config(format!("observation point {p:?} is not interior")));
        }
        if !(self.data_noise_std >= 0.0) {
            return Err(Error::Config("data noise std must be non-negative".into()));
        }
        NoiseModel::new(self.noise.gamma_std)?;
        Ok(())
    }

    pub fn n_levels(&self) -> usize {
        self.hierarchy.len()
    }

    /// Cells per side of the KL lattice: the finest mesh, capped.
    pub fn kl_grid_cells(&self) -> usize {
        self.hierarchy.last().copied().unwrap_or(1).min(self.kl_grid_cap)
    }
}

struct LevelForward {
    system: FemSystem,
    field: FieldSampler,
    observe: ObservationOperator,
}

/// Discretised forward response operators `G_ℓ` for every level.
pub struct ForwardModel {
    spec: ProblemSpec,
    basis: Arc<KlBasis>,
    levels: Vec<LevelForward>,
}

impl std::fmt::Debug for ForwardModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ForwardModel")
            .field("example", &self.spec.example)
            .field("hierarchy", &self.spec.hierarchy)
            .field("n_sto", &self.spec.n_sto)
            .finish()
    }
}

impl ForwardModel {
    /// Builds the KL basis and the per-level discretisations.
    pub fn new(spec: ProblemSpec) -> Result<Self> {
        spec.validate()?;
        let grid = QuadratureGrid::trapezoidal(spec.kl_grid_cells())?;
        let mean = vec![spec.prior_mean; grid.len()];
        let basis = Arc::new(compute_kl_basis(&grid, &spec.prior, &mean, spec.n_sto)?);
        Self::with_basis(spec, basis)
    }

    /// Reuses an existing basis; its mode count must equal `spec.n_sto`.
    pub fn with_basis(spec: ProblemSpec, basis: Arc<KlBasis>) -> Result<Self> {
        spec.validate()?;
        if basis.n_sto() != spec.n_sto {
            return Err(Error::Config(format!(
                "basis has {} modes, problem expects {}",
                basis.n_sto(),
                spec.n_sto
            )));
        }
        let levels = spec
            .hierarchy
            .iter()
            .map(|&n| {
                let mesh = Arc::new(build_mesh(n)?);
                let field = basis.sampler_at(&mesh.centroids())?;
                let observe = ObservationOperator::new(&mesh, &spec.observation_points)?;
                let system = FemSystem::new(mesh, spec.source, spec.boundary);
                Ok(LevelForward { system, field, observe })
            })
            .collect::<Result<_>>()?;
        Ok(Self { spec, basis, levels })
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn basis(&self) -> &Arc<KlBasis> {
        &self.basis
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    /// `G_ℓ(θ)`: pressures at the observation points (0-based level).
    pub fn forward(&self, level: usize, coeffs: &[f64]) -> Result<Vec<f64>> {
        let lvl = self
            .levels
            .get(level)
            .ok_or_else(|| Error::Domain(format!("level {level} outside 0..{}", self.levels.len())))?;
        if coeffs.len() != self.spec.n_sto {
            return Err(Error::Domain(format!(
                "expected {} KL coefficients, got {}",
                self.spec.n_sto,
                coeffs.len()
            )));
        }
        let mut kappa = lvl.field.evaluate(coeffs);
        kappa.iter_mut().for_each(|k| *k = k.exp());
        let sol = lvl.system.solve(&kappa)?;
        Ok(lvl.observe.apply(&sol))
    }

    /// `Φ_ℓ(θ) = ‖y − G_ℓ(θ)‖² / (2γ²)`.
    pub fn potential(&self, level: usize, coeffs: &[f64], y: &[f64]) -> Result<f64> {
        let g = self.forward(level, coeffs)?;
        misfit_potential(&g, y, self.spec.noise.gamma_std)
    }
}

/// `‖y − g‖² / (2γ²)`.
pub fn misfit_potential(g: &[f64], y: &[f64], gamma_std: f64) -> Result<f64> {
    if g.len() != y.len() {
        return Err(Error::Domain(format!(
            "{} model outputs but {} observations",
            g.len(),
            y.len()
        )));
    }
    let ss: f64 = g.iter().zip(y).map(|(g, y)| (y - g).powi(2)).sum();
    Ok(ss / (2.0 * gamma_std * gamma_std))
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticDataset {
    pub seed: u64,
    pub theta_true: Vec<f64>,
    pub y: Vec<f64>,
    pub example: ExampleId,
    pub generation_noise_std: f64,
}

impl SyntheticDataset {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses and checks internal consistency (finite values, noise std).
    pub fn from_json(text: &str) -> Result<Self> {
        let ds: Self = serde_json::from_str(text)?;
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta_true.is_empty() || self.y.is_empty() {
            return Err(Error::Config("dataset has empty theta_true or y".into()));
        }
        if self.theta_true.iter().chain(&self.y).any(|v| !v.is_finite()) {
            return Err(Error::Config("dataset contains non-finite values".into()));
        }
        if !(self.generation_noise_std >= 0.0 && self.generation_noise_std.is_finite()) {
            return Err(Error::Config("generation noise std must be non-negative".into()));
        }
        Ok(())
    }

    /// Checks that the dataset fits a problem.
    pub fn check_against(&self, spec: &ProblemSpec) -> Result<()> {
        if self.example != spec.example {
            return Err(Error::Config(format!(
                "dataset was generated for {} but the problem is {}",
                self.example.name(),
                spec.example.name()
            )));
        }
        if self.theta_true.len() != spec.n_sto || self.y.len() != spec.observation_points.len() {
            return Err(Error::Config(format!(
                "dataset shape ({} coefficients, {} observations) does not match the problem ({}, {})",
                self.theta_true.len(),
                self.y.len(),
                spec.n_sto,
                spec.observation_points.len()
            )));
        }
        Ok(())
    }
}

/// Draws `θ_true` from the discretised prior and observes it on the finest
/// level with additive `N(0, σ_data² I)` noise.
pub fn generate_synthetic_data(model: &ForwardModel, seed: u64) -> Result<SyntheticDataset> {
    let spec = model.spec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta_true = sample_prior_coeffs(spec.n_sto, 1, &mut rng).remove(0);
    let mut y = model.forward(model.n_levels() - 1, &theta_true)?;
    if spec.data_noise_std > 0.0 {
        let noise = Normal::new(0.0, spec.data_noise_std).map_err(|e| Error::Config(format!("data noise: {e}")))?;
        y.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
    }
    Ok(SyntheticDataset {
        seed,
        theta_true,
        y,
        example: spec.example,
        generation_noise_std: spec.data_noise_std,
    })
}

/// A forward model paired with data: the potentials a sampler targets.
#[derive(Debug)]
pub struct InverseProblem {
    model: Arc<ForwardModel>,
    y: Vec<f64>,
}

impl InverseProblem {
    pub fn new(model: Arc<ForwardModel>, dataset: &SyntheticDataset) -> Result<Self> {
        dataset.check_against(model.spec())?;
        Ok(Self {
            model,
            y: dataset.y.clone(),
        })
    }

    pub fn model(&self) -> &ForwardModel {
        &self.model
    }

    pub fn data(&self) -> &[f64] {
        &self.y
    }
}

impl PotentialModel for InverseProblem {
    fn dim(&self) -> usize {
        self.model.spec.n_sto
    }

    fn n_levels(&self) -> usize {
        self.model.n_levels()
    }

    fn potential(&self, level: usize, coeffs: &[f64]) -> Result<f64> {
        self.model.potential(level, coeffs, &self.y)
    }
}
