use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};

use mls2mc::inverse_problem::{generate_synthetic_data, ForwardModel, InverseProblem, SyntheticDataset};
use mls2mc::metrics::{self, Marginal, WeightedSample1D};
use mls2mc::model::PotentialModel;
use mls2mc::random_field::FieldSampler;
use mls2mc::scheduler::{self, write_trace_csv, RunFailure, RunRecord, SchemeVariant};
use mls2mc::smc::rng::derive_seed;
use mls2mc::smc::{read_ensemble_csv, EnsembleTable};

use crate::config::{ExampleKind, RawConfig, RunConfig};
use crate::manifest::{RunManifest, SolveCounts, MANIFEST_FILE};
use crate::CliError;

pub const DATASET_FILE: &str = "dataset.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const ENSEMBLE_FILE: &str = "ensemble.csv";

fn create_dir(p: &Path) -> Result<(), CliError> {
    fs::create_dir_all(p).map_err(|e| CliError::io(p.display().to_string(), e))
}

fn write_file(p: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(p, bytes).map_err(|e| CliError::io(p.display().to_string(), e))
}

fn read_file(p: &Path) -> Result<String, CliError> {
    fs::read_to_string(p).map_err(|e| CliError::io(p.display().to_string(), e))
}

fn forward_model(cfg: &RunConfig) -> Result<Arc<ForwardModel>, CliError> {
    Ok(Arc::new(ForwardModel::new(cfg.problem_spec()?)?))
}

/// Writes `out/dataset.json` for the configured example and data seed.
pub fn cmd_generate_data(cfg: &RunConfig, out: &Path) -> Result<PathBuf, CliError> {
    if cfg.example == ExampleKind::GaussianLinearToy {
        return Err(CliError::Config(
            "the toy example takes its data from the [toy] table".into(),
        ));
    }
    let model = forward_model(cfg)?;
    let data = generate_synthetic_data(&model, cfg.data_seed)?;
    create_dir(out)?;
    let path = out.join(DATASET_FILE);
    write_file(&path, format!("{}\n", data.to_json()?).as_bytes())?;
    info!("wrote {} ({} observations)", path.display(), data.y.len());
    Ok(path)
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub scheme_dir: PathBuf,
    pub replicate_dirs: Vec<PathBuf>,
    pub succeeded: usize,
    pub failures: Vec<String>,
}

fn solve_counts(rec: &RunRecord) -> SolveCounts {
    let c = &rec.cost;
    SolveCounts {
        live: c.live_solves.clone(),
        update: c.update_solves.clone(),
        initial: c.initial_solves.clone(),
        probe_discarded: c.probe_solves_discarded.clone(),
        probe_reused: c.probe_solves_reused.clone(),
    }
}

fn run_one<M: PotentialModel>(
    cfg: &RunConfig,
    model: &M,
    r: usize,
    dir: &Path,
    dataset: Option<&Path>,
) -> Result<RunManifest, CliError> {
    create_dir(dir)?;
    let seed = derive_seed(cfg.sampler_seed, r as u64);
    let start = Instant::now();
    let outcome = scheduler::run(&cfg.scheme_kind(), model, cfg.particles, seed, &cfg.cost_model()?);
    let wall = start.elapsed().as_secs_f64();
    let n_levels = cfg.n_levels();
    let mut m = RunManifest {
        config: cfg.clone(),
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        replicate: r,
        seed,
        status: "ok".into(),
        error: None,
        wall_time_s: wall,
        log_evidence: None,
        final_level: None,
        terminated_early: None,
        n_steps: None,
        cost_formula: None,
        cost_counted: None,
        cost_with_overhead: None,
        solves: None,
        trace: TRACE_FILE.into(),
        ensemble: None,
        dataset: dataset.map(Path::to_path_buf),
    };
    let mut trace = Vec::new();
    match outcome {
        Ok(rec) => {
            write_trace_csv(&rec.trace, n_levels, &mut trace)?;
            let mut ens = Vec::new();
            rec.ensemble.write_csv(&mut ens)?;
            write_file(&dir.join(ENSEMBLE_FILE), &ens)?;
            m.ensemble = Some(ENSEMBLE_FILE.into());
            m.log_evidence = Some(rec.log_evidence);
            m.final_level = Some(rec.final_level);
            m.terminated_early = Some(rec.terminated_early);
            m.n_steps = Some(rec.history.len());
            m.cost_formula = Some(rec.cost.formula);
            m.cost_counted = Some(rec.cost.counted);
            m.cost_with_overhead = Some(rec.cost.total_with_overhead);
            m.solves = Some(solve_counts(&rec));
        }
        Err(RunFailure { error, trace: rows }) => {
            if !error.is_degeneracy() {
                return Err(error.into());
            }
            warn!("{} replicate {r}: {error}", cfg.scheme.name());
            write_trace_csv(&rows, n_levels, &mut trace)?;
            m.status = "failed".into();
            m.error = Some(error.to_string());
        }
    }
    write_file(&dir.join(TRACE_FILE), &trace)?;
    m.write_atomic(dir)?;
    Ok(m)
}

fn load_dataset(path: &Path) -> Result<SyntheticDataset, CliError> {
    SyntheticDataset::from_json(&read_file(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Runs `cfg.replicates` replicates into `out/<scheme>/rep_NNN/`.
///
/// Without `dataset`, data are generated from the configured data seed and
/// written to `out/dataset.json` first.
pub fn cmd_run(cfg: &RunConfig, dataset: Option<&Path>, out: &Path) -> Result<RunSummary, CliError> {
    create_dir(out)?;
    let scheme_dir = out.join(cfg.scheme.name());
    let mut summary = RunSummary {
        scheme_dir: scheme_dir.clone(),
        replicate_dirs: Vec::new(),
        succeeded: 0,
        failures: Vec::new(),
    };
    let mut record = |m: RunManifest, dir: PathBuf| {
        if m.is_ok() {
            summary.succeeded += 1;
        } else {
            summary
                .failures
                .push(format!("replicate {}: {}", m.replicate, m.error.unwrap_or_default()));
        }
        summary.replicate_dirs.push(dir);
    };
    let rep_dir = |r: usize| scheme_dir.join(format!("rep_{r:03}"));
    if cfg.example == ExampleKind::GaussianLinearToy {
        if dataset.is_some() {
            return Err(CliError::Config("the toy example does not take a dataset".into()));
        }
        let model = cfg.toy_model()?;
        for r in 0..cfg.replicates {
            record(run_one(cfg, &model, r, &rep_dir(r), None)?, rep_dir(r));
        }
    } else {
        let fm = forward_model(cfg)?;
        let path = match dataset {
            Some(p) => p.to_path_buf(),
            None => {
                let data = generate_synthetic_data(&fm, cfg.data_seed)?;
                let p = out.join(DATASET_FILE);
                write_file(&p, format!("{}\n", data.to_json()?).as_bytes())?;
                p
            }
        };
        let data = load_dataset(&path)?;
        let problem = InverseProblem::new(fm, &data).map_err(|e| CliError::Config(e.to_string()))?;
        for r in 0..cfg.replicates {
            record(run_one(cfg, &problem, r, &rep_dir(r), Some(&path))?, rep_dir(r));
        }
    }
    info!(
        "{}: {}/{} replicates completed",
        cfg.scheme.name(),
        summary.succeeded,
        cfg.replicates
    );
    if summary.succeeded == 0 {
        return Err(CliError::Numerical(format!(
            "all {} replicates of {} failed: {}",
            cfg.replicates,
            cfg.scheme.name(),
            summary.failures.join("; ")
        )));
    }
    Ok(summary)
}

#[derive(Debug, Clone)]
pub struct CompareOptions {
    /// 1-based KL coefficient indices.
    pub kl_indices: Vec<usize>,
    pub points: Vec<[f64; 2]>,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            kl_indices: vec![1],
            points: Vec::new(),
        }
    }
}

struct LoadedRun {
    id: String,
    manifest: RunManifest,
    ensemble: EnsembleTable,
}

fn run_dirs(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if dir.join(MANIFEST_FILE).is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut dirs = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir.display().to_string(), e))? {
        let p = entry.map_err(|e| CliError::io(dir.display().to_string(), e))?.path();
        if p.join(MANIFEST_FILE).is_file() {
            dirs.push(p);
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(CliError::Config(format!("{} contains no run manifests", dir.display())));
    }
    Ok(dirs)
}

fn load_runs(dir: &Path, label: &str) -> Result<Vec<LoadedRun>, CliError> {
    let mut runs = Vec::new();
    for d in run_dirs(dir)? {
        let manifest = RunManifest::read(&d)?;
        let Some(ens) = &manifest.ensemble else {
            continue;
        };
        let p = d.join(ens);
        let file = fs::File::open(&p).map_err(|e| CliError::io(p.display().to_string(), e))?;
        let ensemble = read_ensemble_csv(file).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
        let name = d
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        runs.push(LoadedRun {
            id: format!("{label}:{name}"),
            manifest,
            ensemble,
        });
    }
    if runs.is_empty() {
        return Err(CliError::Numerical(format!("{} has no successful runs", dir.display())));
    }
    Ok(runs)
}

/// Aggregates of a comparison, also written as rows of the CSV.
#[derive(Debug, Clone, Default)]
pub struct CompareReport {
    /// (marginal name, mean, std) over all `|A|·|B|` pairs.
    pub ks: Vec<(String, f64, f64)>,
    pub pairs: usize,
    pub mean_cost_formula: (f64, f64),
    pub mean_cost_with_overhead: (f64, f64),
}

impl CompareReport {
    /// Mean formula cost of B over that of A.
    pub fn cost_ratio(&self) -> f64 {
        self.mean_cost_formula.1 / self.mean_cost_formula.0
    }
}

struct Row<'a> {
    run_id: &'a str,
    scheme: &'a str,
    j: Option<usize>,
    tau_star: Option<f64>,
    metric: String,
    value: f64,
    cost_formula: Option<f64>,
    cost_counted: Option<f64>,
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Compares the runs under `a` with those under `b` and writes the metrics
/// CSV to `out`.
pub fn cmd_compare(a: &Path, b: &Path, opts: &CompareOptions, out: &Path) -> Result<CompareReport, CliError> {
    let ra = load_runs(a, "A")?;
    let rb = load_runs(b, "B")?;
    let (ca, cb) = (&ra[0].manifest.config, &rb[0].manifest.config);
    if ca.example != cb.example || ca.n_sto != cb.n_sto {
        return Err(CliError::Config(format!(
            "cannot compare {} (n_sto {}) with {} (n_sto {})",
            ca.example.name(),
            ca.n_sto,
            cb.example.name(),
            cb.n_sto
        )));
    }
    if ra[0].manifest.dataset.as_ref().map(|p| p.file_name()) != rb[0].manifest.dataset.as_ref().map(|p| p.file_name())
    {
        warn!("comparing runs that may use different datasets");
    }
    let pde = ca.example.pde().is_some();
    let fm = if pde { Some(forward_model(ca)?) } else { None };
    let dataset = match (&fm, &ra[0].manifest.dataset) {
        (Some(_), Some(p)) => {
            let p = if p.is_relative() && !p.exists() {
                a.join(p)
            } else {
                p.clone()
            };
            Some(load_dataset(&p)?)
        }
        _ => None,
    };

    let mut wtr = csv::Writer::from_writer(Vec::new());
    let header = [
        "run_id",
        "scheme",
        "J",
        "tau_star",
        "metric_name",
        "value",
        "cost_formula",
        "cost_counted",
    ];
    wtr.write_record(header).map_err(mls2mc::Error::from)?;
    let mut emit = |r: Row| -> Result<(), CliError> {
        wtr.write_record([
            r.run_id.to_string(),
            r.scheme.to_string(),
            opt(r.j),
            opt(r.tau_star),
            r.metric,
            format!("{:?}", r.value),
            opt(r.cost_formula),
            opt(r.cost_counted),
        ])
        .map_err(mls2mc::Error::from)?;
        Ok(())
    };

    let ref_logz: Vec<f64> = ra.iter().filter_map(|r| r.manifest.log_evidence).collect();
    for run in ra.iter().chain(&rb) {
        let m = &run.manifest;
        let base = |metric: &str, value| Row {
            run_id: &run.id,
            scheme: m.config.scheme.name(),
            j: Some(m.config.particles),
            tau_star: Some(m.config.tau_star),
            metric: metric.to_string(),
            value,
            cost_formula: m.cost_formula,
            cost_counted: m.cost_counted,
        };
        let mean = weighted_mean(&run.ensemble);
        if let (Some(fm), Some(data)) = (&fm, &dataset) {
            match metrics::rel_err(&mean, &data.theta_true, fm.basis().eigenvalues()) {
                Ok(v) => emit(base("rel_err", v))?,
                Err(e) => warn!("{}: rel_err: {e}", run.id),
            }
            match metrics::rel_misfit(&mean, fm, &data.y) {
                Ok(v) => emit(base("rel_misfit", v))?,
                Err(e) => warn!("{}: rel_misfit: {e}", run.id),
            }
        }
        if let Some(lz) = m.log_evidence {
            emit(base("log_evidence", lz))?;
            match metrics::rel_err_evid(lz, &ref_logz) {
                Ok(v) => emit(base("rel_err_evid", v))?,
                Err(e) => warn!("{}: rel_err_evid: {e}", run.id),
            }
        }
    }

    let mut selected: Vec<(String, Marginal, Option<FieldSampler>)> = Vec::new();
    for &n in &opts.kl_indices {
        if n == 0 || n > ca.n_sto {
            return Err(CliError::Config(format!("KL index {n} out of range 1..={}", ca.n_sto)));
        }
        selected.push((format!("ks_theta_{n}"), Marginal::KlIndex(n - 1), None));
    }
    for &x in &opts.points {
        let fm = fm
            .as_ref()
            .ok_or_else(|| CliError::Config("point marginals need a PDE example".into()))?;
        let s = fm.basis().sampler_at(&[x])?;
        selected.push((format!("ks_field_{}_{}", x[0], x[1]), Marginal::Point(x), Some(s)));
    }
    let mut report = CompareReport {
        pairs: ra.len() * rb.len(),
        ..CompareReport::default()
    };
    let pair_scheme = format!("{}-vs-{}", cb.scheme.name(), ca.scheme.name());
    for (name, which, sampler) in &selected {
        let ma: Vec<WeightedSample1D> = ra
            .iter()
            .map(|r| metrics::marginal(&r.ensemble, *which, sampler.as_ref()))
            .collect::<Result<_, _>>()?;
        let mb: Vec<WeightedSample1D> = rb
            .iter()
            .map(|r| metrics::marginal(&r.ensemble, *which, sampler.as_ref()))
            .collect::<Result<_, _>>()?;
        let mut all = Vec::with_capacity(report.pairs);
        for (x, sa) in ra.iter().zip(&ma) {
            for (y, sb) in rb.iter().zip(&mb) {
                let d = metrics::ks_distance(sa, sb);
                all.push(d);
                emit(Row {
                    run_id: &format!("{}|{}", x.id, y.id),
                    scheme: &pair_scheme,
                    j: Some(cb.particles),
                    tau_star: Some(cb.tau_star),
                    metric: name.clone(),
                    value: d,
                    cost_formula: None,
                    cost_counted: None,
                })?;
            }
        }
        let (m, s) = metrics::mean_std(&all);
        report.ks.push((name.clone(), m, s));
    }

    let mean_of = |runs: &[LoadedRun], f: fn(&RunManifest) -> Option<f64>| {
        let v: Vec<f64> = runs.iter().filter_map(|r| f(&r.manifest)).collect();
        metrics::mean_std(&v).0
    };
    report.mean_cost_formula = (mean_of(&ra, |m| m.cost_formula), mean_of(&rb, |m| m.cost_formula));
    report.mean_cost_with_overhead = (
        mean_of(&ra, |m| m.cost_with_overhead),
        mean_of(&rb, |m| m.cost_with_overhead),
    );
    let agg = |metric: &str, value: f64| Row {
        run_id: "aggregate",
        scheme: &pair_scheme,
        j: Some(cb.particles),
        tau_star: Some(cb.tau_star),
        metric: metric.to_string(),
        value,
        cost_formula: None,
        cost_counted: None,
    };
    for (name, m, s) in &report.ks {
        emit(agg(&format!("{name}_mean"), *m))?;
        emit(agg(&format!("{name}_std"), *s))?;
    }
    emit(agg("pairs", report.pairs as f64))?;
    emit(agg("cost_ratio_formula", report.cost_ratio()))?;
    emit(agg(
        "cost_ratio_with_overhead",
        report.mean_cost_with_overhead.1 / report.mean_cost_with_overhead.0,
    ))?;
    let bytes = wtr
        .into_inner()
        .map_err(|e| CliError::io(out.display().to_string(), e.into_error()))?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_file(out, &bytes)?;
    Ok(report)
}

fn weighted_mean(t: &EnsembleTable) -> Vec<f64> {
    let mut m = vec![0.0; t.dim()];
    for (w, th) in t.weights.iter().zip(&t.thetas) {
        for (mi, x) in m.iter_mut().zip(th) {
            *mi += w * x;
        }
    }
    m
}

/// Data generation, runs of every relevant scheme and comparisons against
/// single-level SMC, all under `out`.
pub fn cmd_replicate_example(raw: RawConfig, paper_scale: bool, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let base = RunConfig::resolve(raw.clone(), paper_scale)?;
    let schemes: &[SchemeVariant] = match base.example {
        ExampleKind::Ex6 => &[SchemeVariant::SingleLevel, SchemeVariant::Mls2mcMaxLevel],
        _ => &[SchemeVariant::SingleLevel, SchemeVariant::Mls2mc, SchemeVariant::Mlb],
    };
    let dataset = if base.example == ExampleKind::GaussianLinearToy {
        None
    } else {
        Some(cmd_generate_data(&base, out)?)
    };
    let mut ok = Vec::new();
    for &s in schemes {
        let cfg = RunConfig::resolve(
            RawConfig {
                scheme: Some(s),
                ..raw.clone()
            },
            paper_scale,
        )?;
        match cmd_run(&cfg, dataset.as_deref(), out) {
            Ok(sum) => ok.push(sum.scheme_dir),
            Err(CliError::Numerical(msg)) => warn!("{msg}"),
            Err(e) => return Err(e),
        }
    }
    let mut written = Vec::new();
    if let Some(reference) = ok.iter().find(|d| d.ends_with(SchemeVariant::SingleLevel.name())) {
        for dir in &ok {
            let name = dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let path = out.join(format!("compare_{name}_vs_single-level.csv"));
            let rep = cmd_compare(reference, dir, &CompareOptions::default(), &path)?;
            info!(
                "{name} vs single-level: mean KS(theta_1) {:.4}, cost ratio {:.3}",
                rep.ks[0].1,
                rep.cost_ratio()
            );
            written.push(path);
        }
    }
    Ok(written)
}
