//! Particle ensembles and the elementary SMC moves: reweighting, adaptive
//! parameter selection, systematic resampling, random-walk Metropolis
//! mutation and evidence accumulation.

pub mod ensemble;
pub mod evidence;
pub mod mutation;
pub mod rng;
pub mod weights;

pub use ensemble::{read_ensemble_csv, systematic_indices, EnsembleTable, Particle, ParticleEnsemble};
pub use evidence::EvidenceAccumulator;
pub use mutation::{mh_mutate, MhKernel, MutationStats, TargetDensity};
pub use weights::{
    bridge_update_weights, coefficient_of_variation, ess, solve_next_parameter, temper_update_weights, UpdateWeights,
};
