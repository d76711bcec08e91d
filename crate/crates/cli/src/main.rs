use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, warn};

use mls2mc_cli::{
    cmd_compare, cmd_generate_data, cmd_replicate_example, cmd_run, config, CliError, CompareOptions, ExampleKind,
    RawConfig, RunConfig,
};

#[derive(Parser)]
#[command(
    name = "mls2mc",
    version,
    about = "Multilevel sequential-squared Monte Carlo experiments"
)]
struct Cli {
    /// Worker threads for particle-parallel work (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Use the full five-level hierarchies and particle counts.
    #[arg(long)]
    paper_scale: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a true parameter and write synthetic observations.
    GenerateData {
        #[command(flatten)]
        common: Common,
        /// Data seed (overrides `data_seed`).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the configured sampler for every replicate.
    Run {
        #[command(flatten)]
        common: Common,
        /// Master sampler seed (overrides `sampler_seed`).
        #[arg(long)]
        seed: Option<u64>,
        /// Dataset JSON; generated from the config when omitted.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Compare two sets of runs and write a metrics CSV.
    Compare {
        /// Reference run directory (a scheme directory or a single run).
        a: PathBuf,
        /// Run directory compared against A.
        b: PathBuf,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
        /// 1-based KL coefficients whose marginals are compared.
        #[arg(long = "kl-index", default_value = "1", value_delimiter = ',')]
        kl_indices: Vec<usize>,
        /// Spatial points `x,y` whose field marginals are compared.
        #[arg(long = "point", value_parser = parse_point)]
        points: Vec<[f64; 2]>,
    },
    /// Generate data, run every scheme and compare against single-level SMC.
    ReplicateExample {
        #[command(flatten)]
        common: Common,
        /// ex4, ex5, ex6 or gaussian-linear-toy (overrides `example`).
        #[arg(long)]
        example: Option<ExampleKind>,
        /// Master sampler seed (overrides `sampler_seed`).
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn parse_point(s: &str) -> Result<[f64; 2], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [x, y] => Ok([x, y]),
        _ => Err(format!("expected x,y, got {s:?}")),
    }
}

fn read_raw(c: &Common) -> Result<RawConfig, CliError> {
    let mut raw = match &c.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p.display().to_string(), e))?;
            config::parse_raw(&text)?
        }
        None => RawConfig::default(),
    };
    if let Some(o) = &c.out {
        raw.output_dir = Some(o.clone());
    }
    if c.paper_scale {
        warn!("--paper-scale: full hierarchies and particle counts can take hours to days");
    }
    Ok(raw)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::GenerateData { common, seed } => {
            let mut raw = read_raw(&common)?;
            raw.data_seed = seed.or(raw.data_seed);
            let cfg = RunConfig::resolve(raw, common.paper_scale)?;
            let p = cmd_generate_data(&cfg, &cfg.output_dir)?;
            println!("{}", p.display());
        }
        Command::Run { common, seed, dataset } => {
            let mut raw = read_raw(&common)?;
            raw.sampler_seed = seed.or(raw.sampler_seed);
            let cfg = RunConfig::resolve(raw, common.paper_scale)?;
            let s = cmd_run(&cfg, dataset.as_deref(), &cfg.output_dir)?;
            for f in &s.failures {
                eprintln!("{}: {f}", cfg.scheme.name());
            }
            println!(
                "{} ({}/{} replicates ok)",
                s.scheme_dir.display(),
                s.succeeded,
                cfg.replicates
            );
        }
        Command::Compare {
            a,
            b,
            out,
            kl_indices,
            points,
        } => {
            let rep = cmd_compare(&a, &b, &CompareOptions { kl_indices, points }, &out)?;
            for (name, m, s) in &rep.ks {
                println!("{name}: mean {m:.4} std {s:.4} over {} pairs", rep.pairs);
            }
            println!("cost ratio (formula) {:.4}", rep.cost_ratio());
        }
        Command::ReplicateExample { common, example, seed } => {
            let mut raw = read_raw(&common)?;
            raw.example = example.or(raw.example);
            raw.sampler_seed = seed.or(raw.sampler_seed);
            let out = RunConfig::resolve(raw.clone(), common.paper_scale)?.output_dir;
            for p in cmd_replicate_example(raw, common.paper_scale, &out)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
