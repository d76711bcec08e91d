//! Run configuration files (TOML).

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use mls2mc::inverse_problem::{ExampleId, NoiseModel, ProblemSpec};
use mls2mc::model::LinearGaussianModel;
use mls2mc::scheduler::{CostModel, SchemeKind, SchemeVariant};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExampleKind {
    Ex4,
    Ex5,
    Ex6,
    GaussianLinearToy,
}

impl ExampleKind {
    pub fn pde(self) -> Option<ExampleId> {
        match self {
            ExampleKind::Ex4 => Some(ExampleId::Ex4),
            ExampleKind::Ex5 => Some(ExampleId::Ex5),
            ExampleKind::Ex6 => Some(ExampleId::Ex6),
            ExampleKind::GaussianLinearToy => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ExampleKind::Ex4 => "ex4",
            ExampleKind::Ex5 => "ex5",
            ExampleKind::Ex6 => "ex6",
            ExampleKind::GaussianLinearToy => "gaussian-linear-toy",
        }
    }
}

impl std::str::FromStr for ExampleKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Ok(match s {
            "ex4" => ExampleKind::Ex4,
            "ex5" => ExampleKind::Ex5,
            "ex6" => ExampleKind::Ex6,
            "gaussian-linear-toy" => ExampleKind::GaussianLinearToy,
            other => return Err(CliError::Config(format!("unknown example {other:?}"))),
        })
    }
}

/// `y = a_ℓ · θ + η`; one gain vector per level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyConfig {
    #[serde(default = "default_toy_gains")]
    pub gains: Vec<Vec<f64>>,
    #[serde(default = "default_toy_y")]
    pub y: f64,
    #[serde(default = "default_toy_gamma")]
    pub gamma: f64,
}

fn default_toy_gains() -> Vec<Vec<f64>> {
    vec![vec![1.0]]
}

fn default_toy_y() -> f64 {
    1.5
}

fn default_toy_gamma() -> f64 {
    0.5
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            gains: default_toy_gains(),
            y: default_toy_y(),
            gamma: default_toy_gamma(),
        }
    }
}

/// Every key is optional; unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub example: Option<ExampleKind>,
    pub scheme: Option<SchemeVariant>,
    pub particles: Option<usize>,
    pub tau_star: Option<f64>,
    pub tau_lu: Option<f64>,
    pub tau_min: Option<f64>,
    pub probe_size: Option<usize>,
    pub bridging_cap: Option<usize>,
    pub hierarchy: Option<Vec<usize>>,
    pub n_sto: Option<usize>,
    pub kl_grid_cap: Option<usize>,
    pub noise_std: Option<f64>,
    pub cost_dimension: Option<u32>,
    pub level_costs: Option<Vec<f64>>,
    pub data_seed: Option<u64>,
    pub sampler_seed: Option<u64>,
    pub replicates: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub toy: Option<ToyConfig>,
}

/// A fully resolved and validated configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub example: ExampleKind,
    pub scheme: SchemeVariant,
    pub particles: usize,
    pub tau_star: f64,
    pub tau_lu: f64,
    pub tau_min: f64,
    pub probe_size: usize,
    pub bridging_cap: usize,
    pub hierarchy: Vec<usize>,
    pub n_sto: usize,
    pub kl_grid_cap: usize,
    pub noise_std: f64,
    pub cost_dimension: u32,
    pub level_costs: Option<Vec<f64>>,
    pub data_seed: u64,
    pub sampler_seed: u64,
    pub replicates: usize,
    pub output_dir: PathBuf,
    pub paper_scale: bool,
    pub toy: Option<ToyConfig>,
}

pub fn parse_raw(text: &str) -> Result<RawConfig, CliError> {
    toml::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
}

impl RunConfig {
    /// Fills defaults for `raw.example` (desk scale unless `paper_scale`).
    pub fn resolve(raw: RawConfig, paper_scale: bool) -> Result<Self, CliError> {
        let example = raw.example.unwrap_or(ExampleKind::Ex4);
        let base = example.pde().map(|ex| {
            if paper_scale {
                ProblemSpec::full(ex)
            } else {
                ProblemSpec::desk(ex)
            }
        });
        let toy = match example {
            ExampleKind::GaussianLinearToy => Some(raw.toy.unwrap_or_default()),
            _ if raw.toy.is_some() => {
                return Err(CliError::Config(
                    "[toy] is only valid with example = \"gaussian-linear-toy\"".into(),
                ))
            }
            _ => None,
        };
        let (hierarchy, n_sto, kl_grid_cap, noise_std) = match (&base, &toy) {
            (Some(b), _) => (b.hierarchy.clone(), b.n_sto, b.kl_grid_cap, b.noise.gamma_std),
            (None, Some(t)) => (
                (1..=t.gains.len()).collect(),
                t.gains.first().map_or(0, Vec::len),
                1,
                t.gamma,
            ),
            (None, None) => unreachable!(),
        };
        let is_toy = toy.is_some();
        if is_toy
            && (raw.hierarchy.is_some() || raw.n_sto.is_some() || raw.kl_grid_cap.is_some() || raw.noise_std.is_some())
        {
            return Err(CliError::Config(
                "hierarchy, n_sto, kl_grid_cap and noise_std do not apply to the toy example; use [toy]".into(),
            ));
        }
        let scheme = raw.scheme.unwrap_or(match example {
            ExampleKind::Ex6 => SchemeVariant::Mls2mcMaxLevel,
            _ => SchemeVariant::Mls2mc,
        });
        let tau_star = raw.tau_star.unwrap_or(match example {
            ExampleKind::Ex6 => 1.0,
            _ => 0.5,
        });
        let particles = raw.particles.unwrap_or(match (example, paper_scale) {
            (ExampleKind::Ex6, _) => 250,
            (ExampleKind::GaussianLinearToy, _) => 5000,
            (_, true) => 1250,
            (_, false) => 250,
        });
        let cfg = RunConfig {
            example,
            scheme,
            particles,
            tau_star,
            tau_lu: raw.tau_lu.unwrap_or(tau_star),
            tau_min: raw.tau_min.unwrap_or(mls2mc::scheduler::DEFAULT_TAU_MIN),
            probe_size: raw.probe_size.unwrap_or(mls2mc::scheduler::DEFAULT_PROBE_SIZE),
            bridging_cap: raw.bridging_cap.unwrap_or(mls2mc::scheduler::DEFAULT_BRIDGING_CAP),
            hierarchy: raw.hierarchy.unwrap_or(hierarchy),
            n_sto: raw.n_sto.unwrap_or(n_sto),
            kl_grid_cap: raw.kl_grid_cap.unwrap_or(kl_grid_cap),
            noise_std: raw.noise_std.unwrap_or(noise_std),
            cost_dimension: raw.cost_dimension.unwrap_or(2),
            level_costs: raw.level_costs,
            data_seed: raw.data_seed.unwrap_or(1),
            sampler_seed: raw.sampler_seed.unwrap_or(7),
            replicates: raw.replicates.unwrap_or(if paper_scale { 50 } else { 10 }),
            output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("out")),
            paper_scale,
            toy,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str, paper_scale: bool) -> Result<Self, CliError> {
        Self::resolve(parse_raw(text)?, paper_scale)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.particles < 2 {
            return Err(CliError::Config(format!(
                "particles must be at least 2, got {}",
                self.particles
            )));
        }
        if self.replicates == 0 {
            return Err(CliError::Config("replicates must be at least 1".into()));
        }
        self.scheme_kind().validate()?;
        self.cost_model()?;
        match &self.toy {
            Some(t) => {
                LinearGaussianModel::new(t.gains.clone(), t.y, t.gamma)?;
            }
            None => {
                self.problem_spec()?.validate()?;
            }
        }
        Ok(())
    }

    pub fn n_levels(&self) -> usize {
        self.hierarchy.len()
    }

    pub fn scheme_kind(&self) -> SchemeKind {
        SchemeKind {
            tau_lu: self.tau_lu,
            tau_min: self.tau_min,
            probe_size: self.probe_size,
            bridging_cap: self.bridging_cap,
            ..SchemeKind::new(self.scheme, self.tau_star)
        }
    }

    pub fn cost_model(&self) -> Result<CostModel, CliError> {
        let c = match &self.level_costs {
            Some(v) => CostModel::custom(v.clone())?,
            None => CostModel::geometric(self.cost_dimension, self.n_levels())?,
        };
        if c.n_levels() != self.n_levels() {
            return Err(CliError::Config(format!(
                "level_costs has {} entries for {} levels",
                c.n_levels(),
                self.n_levels()
            )));
        }
        Ok(c)
    }

    /// The PDE problem; a configuration error for the toy example.
    pub fn problem_spec(&self) -> Result<ProblemSpec, CliError> {
        let ex = self
            .example
            .pde()
            .ok_or_else(|| CliError::Config("the toy example has no PDE problem".into()))?;
        let mut spec = if self.paper_scale {
            ProblemSpec::full(ex)
        } else {
            ProblemSpec::desk(ex)
        };
        spec.hierarchy = self.hierarchy.clone();
        spec.n_sto = self.n_sto;
        spec.kl_grid_cap = self.kl_grid_cap;
        spec.noise = NoiseModel::new(self.noise_std)?;
        Ok(spec)
    }

    pub fn toy_model(&self) -> Result<LinearGaussianModel, CliError> {
        let t = self
            .toy
            .as_ref()
            .ok_or_else(|| CliError::Config("not a toy configuration".into()))?;
        Ok(LinearGaussianModel::new(t.gains.clone(), t.y, t.gamma)?)
    }
}
