//! Sampler runs under the single-level, multilevel bridging and adaptive
//! multilevel update schemes, with exact cost accounting.

mod cost;
mod trace;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PotentialModel;
use crate::smc::{
    bridge_update_weights, mh_mutate, solve_next_parameter, temper_update_weights, EvidenceAccumulator, MhKernel,
    ParticleEnsemble, TargetDensity, UpdateWeights,
};

pub use cost::{cost_levels, predicted_cost, CostModel};
pub use trace::{read_trace_csv, write_trace_csv, TraceKind, TraceRow};

use cost::Counting;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeVariant {
    /// Tempering on the finest level only.
    SingleLevel,
    /// Tempering on the coarsest level, then bridging level by level.
    Mlb,
    /// Adaptive interleaving of tempering and level updates.
    Mls2mc,
    /// As `Mls2mc`, but may stop before the finest level once `β = 1`.
    Mls2mcMaxLevel,
}

impl SchemeVariant {
    pub fn name(self) -> &'static str {
        match self {
            SchemeVariant::SingleLevel => "single-level",
            SchemeVariant::Mlb => "mlb",
            SchemeVariant::Mls2mc => "mls2mc",
            SchemeVariant::Mls2mcMaxLevel => "mls2mc-max-level",
        }
    }
}

impl std::str::FromStr for SchemeVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "single-level" | "smc" => SchemeVariant::SingleLevel,
            "mlb" => SchemeVariant::Mlb,
            "mls2mc" => SchemeVariant::Mls2mc,
            "mls2mc-max-level" => SchemeVariant::Mls2mcMaxLevel,
            other => return Err(Error::Config(format!("unknown scheme {other:?}"))),
        })
    }
}

pub const DEFAULT_PROBE_SIZE: usize = 100;
pub const DEFAULT_TAU_MIN: f64 = 0.001;
pub const DEFAULT_MIN_STEP: f64 = 1e-6;
pub const DEFAULT_BRIDGING_CAP: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeKind {
    pub variant: SchemeVariant,
    /// Target cv of every tempering and bridging update.
    pub tau_star: f64,
    /// Probe threshold below which a tempering update is preferred.
    pub tau_lu: f64,
    /// Termination threshold of the maximum-level variant.
    pub tau_min: f64,
    /// Number of particles used by the cv probe (clamped to `J`).
    pub probe_size: usize,
    /// Smallest admissible increment of `β` or `ζ`.
    pub min_step: f64,
    /// Maximum number of intermediate bridging steps in one level update.
    pub bridging_cap: usize,
}

impl SchemeKind {
    /// Defaults: `τ_LU = τ*`, `τ_min = 0.001`, `J̃ = 100`.
    pub fn new(variant: SchemeVariant, tau_star: f64) -> Self {
        Self {
            variant,
            tau_star,
            tau_lu: tau_star,
            tau_min: DEFAULT_TAU_MIN,
            probe_size: DEFAULT_PROBE_SIZE,
            min_step: DEFAULT_MIN_STEP,
            bridging_cap: DEFAULT_BRIDGING_CAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64| x > 0.0 && x.is_finite();
        if !pos(self.tau_star) {
            return Err(Error::Config(format!(
                "tau_star must be positive, got {}",
                self.tau_star
            )));
        }
        if !pos(self.tau_lu) || self.tau_lu > self.tau_star {
            return Err(Error::Config(format!(
                "tau_lu must lie in (0, tau_star], got {}",
                self.tau_lu
            )));
        }
        if self.variant == SchemeVariant::Mls2mcMaxLevel && (!pos(self.tau_min) || self.tau_min >= self.tau_lu) {
            return Err(Error::Config(format!(
                "tau_min must lie in (0, tau_lu), got {}",
                self.tau_min
            )));
        }
        if self.probe_size == 0 {
            return Err(Error::Config("probe size must be positive".into()));
        }
        if !pos(self.min_step) || self.min_step >= 1.0 {
            return Err(Error::Config(format!(
                "min_step must lie in (0, 1), got {}",
                self.min_step
            )));
        }
        if self.bridging_cap == 0 {
            return Err(Error::Config("bridging cap must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UpdateKind {
    Itu,
    Lu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Itu,
    Lu,
    Terminate,
}

/// One step `s` of an update scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub s: usize,
    pub kind: UpdateKind,
    /// Temperature index `T(s)`.
    pub k: usize,
    /// 0-based level `B(s) - 1`.
    pub level: usize,
    pub beta: f64,
    /// Intermediate bridging steps `N_B`; 0 for tempering updates.
    pub n_bridge: usize,
    /// ESS and cv of the last reweighting in the step.
    pub ess: f64,
    pub cv: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerState {
    pub s: usize,
    pub k: usize,
    /// 0-based.
    pub level: usize,
    pub n_levels: usize,
    pub beta: f64,
    pub zeta: f64,
    pub last: Option<UpdateKind>,
    pub history: Vec<StepRecord>,
}

impl SchedulerState {
    pub fn new(level: usize, n_levels: usize) -> Self {
        Self {
            s: 0,
            k: 0,
            level,
            n_levels,
            beta: 0.0,
            zeta: 1.0,
            last: None,
            history: Vec::new(),
        }
    }

    pub fn finished(&self) -> bool {
        self.beta >= 1.0 && self.level + 1 == self.n_levels
    }
}

/// Whether the next decision needs a cv probe.
pub fn needs_probe(state: &SchedulerState, scheme: &SchemeKind) -> bool {
    if state.level + 1 >= state.n_levels {
        return false;
    }
    match scheme.variant {
        SchemeVariant::SingleLevel | SchemeVariant::Mlb => false,
        SchemeVariant::Mls2mc => state.beta < 1.0 && state.last == Some(UpdateKind::Itu),
        SchemeVariant::Mls2mcMaxLevel => state.beta >= 1.0 || state.last == Some(UpdateKind::Itu),
    }
}

/// Next move of the scheme. `probe_cv` is required exactly when
/// [`needs_probe`] holds; a missing value counts as an infinite cv.
pub fn decide_next(state: &SchedulerState, probe_cv: Option<f64>, scheme: &SchemeKind) -> Decision {
    let top = state.level + 1 >= state.n_levels;
    let cv = probe_cv.unwrap_or(f64::INFINITY);
    match scheme.variant {
        SchemeVariant::SingleLevel => Decision::Itu,
        SchemeVariant::Mlb => {
            if state.beta < 1.0 {
                Decision::Itu
            } else {
                Decision::Lu
            }
        }
        SchemeVariant::Mls2mc | SchemeVariant::Mls2mcMaxLevel => {
            if state.beta >= 1.0 {
                if scheme.variant == SchemeVariant::Mls2mcMaxLevel && cv < scheme.tau_min {
                    Decision::Terminate
                } else {
                    Decision::Lu
                }
            } else if top || state.last != Some(UpdateKind::Itu) || cv < scheme.tau_lu {
                Decision::Itu
            } else {
                Decision::Lu
            }
        }
    }
}

/// `C_ℓ/C_{ℓ-1} ≥ (N_T* + N_B* - 1)/(N_T* - N_B* + 1)` with `1/0 := ∞`,
/// evaluated in the cross-multiplied form.
pub fn itu_condition(cost_ratio: f64, n_t_star: u64, n_b_star: u64) -> bool {
    let num = n_t_star as f64 + n_b_star as f64 - 1.0;
    let den = n_t_star as f64 - n_b_star as f64 + 1.0;
    cost_ratio * den >= num
}

/// `(N_B*, N_T*) ≈ (⌈β_next/β_now⌉, max(⌈‖Γ⁻¹‖₂⌉ - (k+1), 1))`.
pub fn approx_remaining_counts(beta_next: f64, beta_now: f64, precision_norm: f64, k: usize) -> (u64, u64) {
    let nb = (beta_next / beta_now).ceil().max(1.0) as u64;
    let nt = (precision_norm.ceil() - (k as f64 + 1.0)).max(1.0) as u64;
    (nb, nt)
}

/// Solve counts of a run, per 0-based level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    /// Cost formula evaluated on the history.
    pub formula: f64,
    /// Live solve counter, minus initial and discarded probe solves,
    /// weighted by level costs.
    pub counted: f64,
    pub live_solves: Vec<u64>,
    pub update_solves: Vec<u64>,
    pub initial_solves: Vec<u64>,
    pub probe_solves_discarded: Vec<u64>,
    pub probe_solves_reused: Vec<u64>,
    /// Cost of all live solves including initial and probe evaluations.
    pub total_with_overhead: f64,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub scheme: SchemeKind,
    pub j: usize,
    pub seed: u64,
    pub ensemble: ParticleEnsemble,
    pub history: Vec<StepRecord>,
    pub trace: Vec<TraceRow>,
    pub log_evidence: f64,
    pub cost: CostSummary,
    /// 1-based level the run finished on.
    pub final_level: usize,
    pub terminated_early: bool,
}

impl RunRecord {
    pub fn n_levels(&self) -> usize {
        self.ensemble.n_levels()
    }
}

/// A failed run together with the trace recorded up to the failure.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct RunFailure {
    #[source]
    pub error: Error,
    pub trace: Vec<TraceRow>,
}

struct Runner<'a, M: PotentialModel> {
    model: Counting<'a, M>,
    scheme: SchemeKind,
    cost: &'a CostModel,
    j: usize,
    seed: u64,
    kernel: MhKernel,
    ens: ParticleEnsemble,
    state: SchedulerState,
    evidence: EvidenceAccumulator,
    trace: Vec<TraceRow>,
    rng_step: u64,
    update_solves: Vec<u64>,
    initial_solves: Vec<u64>,
    probe_discarded: Vec<u64>,
    probe_reused: Vec<u64>,
    /// Probe evaluations at the next level awaiting a decision.
    pending_probe: u64,
}

/// Runs a sampler from the prior to the posterior on the finest level (or
/// the level where the maximum-level variant terminates).
pub fn run<M: PotentialModel>(
    scheme: &SchemeKind,
    model: &M,
    j: usize,
    seed: u64,
    cost: &CostModel,
) -> std::result::Result<RunRecord, RunFailure> {
    let fail = |error| RunFailure {
        error,
        trace: Vec::new(),
    };
    scheme.validate().map_err(fail)?;
    if cost.n_levels() != model.n_levels() {
        return Err(fail(Error::Config(format!(
            "cost model has {} levels, the model {}",
            cost.n_levels(),
            model.n_levels()
        ))));
    }
    let n = model.n_levels();
    let start = match scheme.variant {
        SchemeVariant::SingleLevel => n - 1,
        _ => 0,
    };
    let ens = ParticleEnsemble::sample_prior(model.dim(), j, n, seed).map_err(fail)?;
    let mut r = Runner {
        model: Counting::new(model),
        scheme: *scheme,
        cost,
        j,
        seed,
        kernel: MhKernel::standard(model.dim()),
        ens,
        state: SchedulerState::new(start, n),
        evidence: EvidenceAccumulator::new(),
        trace: Vec::new(),
        rng_step: 0,
        update_solves: vec![0; n],
        initial_solves: vec![0; n],
        probe_discarded: vec![0; n],
        probe_reused: vec![0; n],
        pending_probe: 0,
    };
    match r.drive() {
        Ok(terminated) => Ok(r.finish(terminated)),
        Err(error) => Err(RunFailure { error, trace: r.trace }),
    }
}

impl<M: PotentialModel> Runner<'_, M> {
    fn drive(&mut self) -> Result<bool> {
        let lvl = self.state.level;
        self.initial_solves[lvl] = self.ens.ensure_potentials(&self.model, lvl, self.j)?;
        while !self.state.finished() {
            let probe = if needs_probe(&self.state, &self.scheme) {
                Some(self.probe()?)
            } else {
                None
            };
            let decision = decide_next(&self.state, probe, &self.scheme);
            if decision != Decision::Lu && self.pending_probe > 0 {
                let next = self.state.level + 1;
                self.probe_discarded[next] += self.pending_probe;
                self.pending_probe = 0;
                self.ens.clear_level(next);
            }
            match decision {
                Decision::Itu => self.itu()?,
                Decision::Lu => self.lu()?,
                Decision::Terminate => {
                    self.push_row(TraceKind::Term, None, None, vec![0; self.state.n_levels]);
                    return Ok(true);
                }
            }
        }
        Ok(false)
    }

    fn cumulative(&self) -> f64 {
        self.cost.weigh(&self.update_solves)
    }

    fn push_row(&mut self, kind: TraceKind, ess: Option<f64>, cv: Option<f64>, solves: Vec<u64>) {
        let st = &self.state;
        self.trace.push(TraceRow {
            s: st.s,
            kind,
            k: st.k,
            level: st.level + 1,
            beta: st.beta,
            zeta: st.zeta,
            ess,
            cv,
            solves,
            cumulative_cost: self.cumulative(),
        });
    }

    /// Reweights by `w`, accumulates evidence, resamples and mutates.
    fn advance(&mut self, w: &UpdateWeights, target: TargetDensity) -> Result<(f64, f64, Vec<u64>)> {
        if w.is_numerically_singular() {
            return Err(Error::singular("all update weights are below 1e-300"));
        }
        let cv = w.cv()?;
        let ess = w.ess()?;
        self.evidence.step(w)?;
        self.ens.set_weights(w)?;
        self.rng_step += 1;
        self.ens.resample(self.seed, self.rng_step)?;
        let st = mh_mutate(
            &mut self.ens,
            &self.model,
            &target,
            &self.kernel,
            self.seed,
            self.rng_step,
        )?;
        for (u, s) in self.update_solves.iter_mut().zip(&st.solves) {
            *u += s;
        }
        Ok((ess, cv, st.solves))
    }

    fn itu(&mut self) -> Result<()> {
        let lvl = self.state.level;
        let beta = self.state.beta;
        let phi = self.ens.potentials(lvl, self.j)?;
        let next = solve_next_parameter(&phi, beta, self.scheme.tau_star, self.scheme.min_step);
        let w = temper_update_weights(&phi, next - beta)?;
        let (ess, cv, solves) = self
            .advance(&w, TargetDensity::tempered(lvl, next))
            .map_err(|e| e.with_context(lvl + 1, beta))?;
        let st = &mut self.state;
        st.s += 1;
        st.k += 1;
        st.beta = next;
        st.zeta = 1.0;
        st.last = Some(UpdateKind::Itu);
        st.history.push(StepRecord {
            s: st.s,
            kind: UpdateKind::Itu,
            k: st.k,
            level: lvl,
            beta: next,
            n_bridge: 0,
            ess,
            cv,
        });
        self.push_row(TraceKind::Itu, Some(ess), Some(cv), solves);
        Ok(())
    }

    /// cv of a one-step bridge to the next level on the first `J̃` particles.
    fn probe(&mut self) -> Result<f64> {
        let (lvl, beta) = (self.state.level, self.state.beta);
        let jt = self.scheme.probe_size.min(self.j);
        let fresh = self.ens.ensure_potentials(&self.model, lvl + 1, jt)?;
        self.pending_probe += fresh;
        let fine = self.ens.potentials(lvl + 1, jt)?;
        let coarse = self.ens.potentials(lvl, jt)?;
        let w = bridge_update_weights(&fine, &coarse, beta, 1.0)?;
        if w.is_numerically_singular() {
            return Err(Error::singular("all probe weights are below 1e-300").with_context(lvl + 2, beta));
        }
        let cv = w.cv()?;
        let ess = w.ess()?;
        let mut solves = vec![0; self.state.n_levels];
        solves[lvl + 1] = fresh;
        self.push_row(TraceKind::Probe, Some(ess), Some(cv), solves);
        Ok(cv)
    }

    fn lu(&mut self) -> Result<()> {
        let (coarse, beta) = (self.state.level, self.state.beta);
        let fine = coarse + 1;
        let fresh = self.ens.ensure_potentials(&self.model, fine, self.j)?;
        let reused = std::mem::take(&mut self.pending_probe);
        debug_assert_eq!(fresh + reused, self.j as u64);
        self.probe_reused[fine] += reused;
        self.update_solves[fine] += self.j as u64;
        let st = &mut self.state;
        st.s += 1;
        st.level = fine;
        st.zeta = 0.0;
        let mut solves = vec![0; st.n_levels];
        solves[fine] = self.j as u64;
        self.push_row(TraceKind::Lu, None, None, solves);

        let mut n_bridge = 0;
        let (mut ess, mut cv) = (self.j as f64, 0.0);
        while self.state.zeta < 1.0 {
            if n_bridge == self.scheme.bridging_cap {
                return Err(Error::BridgingCapExceeded {
                    from: coarse + 1,
                    to: fine + 1,
                    beta,
                    zeta: self.state.zeta,
                    cap: self.scheme.bridging_cap,
                });
            }
            let zeta = self.state.zeta;
            let phi_f = self.ens.potentials(fine, self.j)?;
            let phi_c = self.ens.potentials(coarse, self.j)?;
            let diff: Vec<f64> = phi_f.iter().zip(&phi_c).map(|(f, c)| beta * (f - c)).collect();
            let next = solve_next_parameter(&diff, zeta, self.scheme.tau_star, self.scheme.min_step);
            let w = bridge_update_weights(&phi_f, &phi_c, beta, next - zeta)?;
            let (e, c, solves) = self
                .advance(&w, TargetDensity::bridge(coarse, fine, beta, next))
                .map_err(|e| e.with_context(fine + 1, beta))?;
            n_bridge += 1;
            self.state.zeta = next;
            (ess, cv) = (e, c);
            self.push_row(TraceKind::Zeta, Some(e), Some(c), solves);
        }
        let st = &mut self.state;
        st.last = Some(UpdateKind::Lu);
        st.history.push(StepRecord {
            s: st.s,
            kind: UpdateKind::Lu,
            k: st.k,
            level: fine,
            beta,
            n_bridge,
            ess,
            cv,
        });
        Ok(())
    }

    fn finish(self, terminated: bool) -> RunRecord {
        let live = self.model.counts();
        let counted_solves: Vec<u64> = (0..live.len())
            .map(|l| live[l] - self.initial_solves[l] - self.probe_discarded[l])
            .collect();
        let cost = CostSummary {
            formula: predicted_cost(&self.state.history, self.j, self.cost),
            counted: self.cost.weigh(&counted_solves),
            total_with_overhead: self.cost.weigh(&live),
            live_solves: live,
            update_solves: self.update_solves,
            initial_solves: self.initial_solves,
            probe_solves_discarded: self.probe_discarded,
            probe_solves_reused: self.probe_reused,
        };
        RunRecord {
            scheme: self.scheme,
            j: self.j,
            seed: self.seed,
            ensemble: self.ens,
            log_evidence: self.evidence.log_evidence(),
            cost,
            final_level: self.state.level + 1,
            terminated_early: terminated,
            history: self.state.history,
            trace: self.trace,
        }
    }
}
