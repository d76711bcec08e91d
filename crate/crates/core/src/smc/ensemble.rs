use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::PotentialModel;

use super::rng::{stream, Purpose};
use super::weights::UpdateWeights;

/// One particle: KL coefficients plus the potentials already computed for
/// them, indexed by 0-based level.
#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub theta: Vec<f64>,
    potentials: Vec<Option<f64>>,
}

impl Particle {
    pub fn new(theta: Vec<f64>, n_levels: usize) -> Self {
        Self {
            theta,
            potentials: vec![None; n_levels],
        }
    }

    pub fn potential(&self, level: usize) -> Option<f64> {
        self.potentials[level]
    }

    pub(crate) fn set_potential(&mut self, level: usize, value: f64) {
        self.potentials[level] = Some(value);
    }

    pub(crate) fn clear_potential(&mut self, level: usize) {
        self.potentials[level] = None;
    }
}

/// `J ≥ 2` weighted particles with per-level potential caches.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    particles: Vec<Particle>,
    weights: Vec<f64>,
    n_levels: usize,
}

impl ParticleEnsemble {
    pub fn new(thetas: Vec<Vec<f64>>, n_levels: usize) -> Result<Self> {
        let j = thetas.len();
        if j < 2 {
            return Err(Error::Config(format!(
                "an ensemble needs at least 2 particles, got {j}"
            )));
        }
        let dim = thetas[0].len();
        if thetas.iter().any(|t| t.len() != dim) {
            return Err(Error::Domain("particles differ in dimension".into()));
        }
        if n_levels == 0 {
            return Err(Error::Config("at least one level is required".into()));
        }
        Ok(Self {
            particles: thetas.into_iter().map(|t| Particle::new(t, n_levels)).collect(),
            weights: vec![1.0 / j as f64; j],
            n_levels,
        })
    }

    /// `J` independent `N(0, I)` draws, particle `j` from its own stream.
    pub fn sample_prior(dim: usize, j: usize, n_levels: usize, seed: u64) -> Result<Self> {
        let thetas = (0..j)
            .map(|p| {
                let mut rng = stream(seed, 0, Purpose::Prior, p as u64);
                (0..dim).map(|_| rng.sample(StandardNormal)).collect()
            })
            .collect();
        Self::new(thetas, n_levels)
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.particles[0].theta.len()
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub(crate) fn particles_mut(&mut self) -> &mut [Particle] {
        &mut self.particles
    }

    pub fn theta(&self, j: usize) -> &[f64] {
        &self.particles[j].theta
    }

    /// Normalised weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn set_weights(&mut self, w: &UpdateWeights) -> Result<()> {
        if w.len() != self.len() {
            return Err(Error::Domain("weight vector length differs from ensemble size".into()));
        }
        self.weights = w.normalized()?;
        Ok(())
    }

    /// Evaluates missing potentials at `level` for particles `0..count` and
    /// returns the number of model evaluations performed.
    pub fn ensure_potentials<M: PotentialModel>(&mut self, model: &M, level: usize, count: usize) -> Result<u64> {
        let count = count.min(self.len());
        let fresh: Vec<Result<bool>> = self.particles[..count]
            .par_iter_mut()
            .map(|p| {
                if p.potentials[level].is_some() {
                    return Ok(false);
                }
                let v = model.potential(level, &p.theta)?;
                if !v.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite potential {v} at level {}",
                        level + 1
                    )));
                }
                p.potentials[level] = Some(v);
                Ok(true)
            })
            .collect();
        let mut n = 0;
        for r in fresh {
            n += u64::from(r?);
        }
        Ok(n)
    }

    /// Cached potentials at `level` for particles `0..count`.
    pub fn potentials(&self, level: usize, count: usize) -> Result<Vec<f64>> {
        self.particles[..count.min(self.len())]
            .iter()
            .map(|p| {
                p.potentials[level].ok_or_else(|| Error::Domain(format!("potential at level {} not cached", level + 1)))
            })
            .collect()
    }

    pub fn clear_level(&mut self, level: usize) {
        for p in &mut self.particles {
            p.clear_potential(level);
        }
    }

    /// Systematic resampling driven by the single uniform of `(seed, step)`.
    pub fn resample(&mut self, seed: u64, step: u64) -> Result<Vec<usize>> {
        let u: f64 = stream(seed, step, Purpose::Resample, 0).gen();
        let idx = systematic_indices(&self.weights, u)?;
        self.particles = idx.iter().map(|&i| self.particles[i].clone()).collect();
        let j = self.len() as f64;
        self.weights.iter_mut().for_each(|w| *w = 1.0 / j);
        Ok(idx)
    }

    /// Weighted mean of the coefficients.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for (p, w) in self.particles.iter().zip(&self.weights) {
            for (mi, t) in m.iter_mut().zip(&p.theta) {
                *mi += w * t;
            }
        }
        m
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["particle_id".to_string(), "weight".to_string()];
        header.extend((1..=self.dim()).map(|i| format!("theta_{i}")));
        wtr.write_record(&header)?;
        for (j, (p, w)) in self.particles.iter().zip(&self.weights).enumerate() {
            let mut row = vec![j.to_string(), fmt_f64(*w)];
            row.extend(p.theta.iter().map(|t| fmt_f64(*t)));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Shortest representation that parses back to the same value.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// Offspring indices of systematic resampling with offset `u ∈ [0, 1)`.
pub fn systematic_indices(weights: &[f64], u: f64) -> Result<Vec<usize>> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() || weights.iter().any(|w| *w < 0.0) {
        return Err(Error::singular("weights cannot be normalised for resampling"));
    }
    let j = weights.len();
    let mut out = Vec::with_capacity(j);
    let mut cum = weights[0] / total;
    let mut i = 0;
    for k in 0..j {
        let pos = (u + k as f64) / j as f64;
        while pos >= cum && i + 1 < j {
            i += 1;
            cum += weights[i] / total;
        }
        out.push(i);
    }
    Ok(out)
}

/// A weighted ensemble as stored in an ensemble CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleTable {
    pub weights: Vec<f64>,
    pub thetas: Vec<Vec<f64>>,
}

impl EnsembleTable {
    pub fn dim(&self) -> usize {
        self.thetas.first().map_or(0, Vec::len)
    }

    /// Column `n` (0-based) of the coefficients.
    pub fn column(&self, n: usize) -> Result<Vec<f64>> {
        if n >= self.dim() {
            return Err(Error::Domain(format!(
                "coefficient {} out of range 1..={}",
                n + 1,
                self.dim()
            )));
        }
        Ok(self.thetas.iter().map(|t| t[n]).collect())
    }
}

impl From<&ParticleEnsemble> for EnsembleTable {
    fn from(e: &ParticleEnsemble) -> Self {
        Self {
            weights: e.weights.clone(),
            thetas: e.particles.iter().map(|p| p.theta.clone()).collect(),
        }
    }
}

pub fn read_ensemble_csv<R: Read>(input: R) -> Result<EnsembleTable> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    let n = header.len();
    if n < 3 || &header[0] != "particle_id" || &header[1] != "weight" {
        return Err(Error::Config(
            "ensemble CSV must start with particle_id,weight,theta_1".into(),
        ));
    }
    for (i, h) in header.iter().skip(2).enumerate() {
        if h != format!("theta_{}", i + 1) {
            return Err(Error::Config(format!("unexpected ensemble column {h:?}")));
        }
    }
    let mut table = EnsembleTable {
        weights: Vec::new(),
        thetas: Vec::new(),
    };
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let id: usize = rec[0]
            .parse()
            .map_err(|_| Error::Config(format!("bad particle_id {:?}", &rec[0])))?;
        if id != row {
            return Err(Error::Config(format!("particle_id {id} out of order at row {row}")));
        }
        let nums = rec
            .iter()
            .skip(1)
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::Config(format!("bad number {f:?} in row {row}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if nums[0] < 0.0 {
            return Err(Error::Config(format!("negative weight in row {row}")));
        }
        table.weights.push(nums[0]);
        table.thetas.push(nums[1..].to_vec());
    }
    if table.weights.is_empty() {
        return Err(Error::Config("ensemble CSV has no rows".into()));
    }
    let total: f64 = table.weights.iter().sum();
    if !(total > 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("ensemble weights sum to {total}, not 1")));
    }
    Ok(table)
}
