use std::fs;
use std::path::Path;
use std::process::Command;

use mls2mc::inverse_problem::SyntheticDataset;
use mls2mc::scheduler::{read_trace_csv, TraceKind};
use mls2mc_cli::RunManifest;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mls2mc"));
    c.env("RUST_LOG", "warn").stdout(std::process::Stdio::null());
    c
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("c.toml");
    fs::write(&p, body).unwrap();
    p
}

const TOY: &str = r#"
example = "gaussian-linear-toy"
scheme = "mls2mc"
particles = 400
replicates = 2

[toy]
gains = [[0.9, 0.1], [1.0, 0.0], [1.0, 0.05]]
y = 1.5
gamma = 0.3
"#;

fn run_toy(dir: &Path, threads: &str) -> std::path::PathBuf {
    let cfg = write_config(dir, TOY);
    let out = dir.join("out");
    let st = bin()
        .args(["--threads", threads, "run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(st.success());
    out
}

#[test]
fn identical_output_across_thread_counts() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let oa = run_toy(a.path(), "1");
    let ob = run_toy(b.path(), "4");
    for rep in ["rep_000", "rep_001"] {
        for f in ["trace.csv", "ensemble.csv"] {
            let pa = oa.join("mls2mc").join(rep).join(f);
            let pb = ob.join("mls2mc").join(rep).join(f);
            assert_eq!(fs::read(&pa).unwrap(), fs::read(&pb).unwrap(), "{}", pa.display());
        }
        let mut ma = RunManifest::read(&oa.join("mls2mc").join(rep)).unwrap();
        let mut mb = RunManifest::read(&ob.join("mls2mc").join(rep)).unwrap();
        ma.wall_time_s = 0.0;
        mb.wall_time_s = 0.0;
        ma.config.output_dir = mb.config.output_dir.clone();
        assert_eq!(serde_json::to_string(&ma).unwrap(), serde_json::to_string(&mb).unwrap());
    }
}

#[test]
fn trace_has_expected_kinds_and_levels() {
    let d = tempfile::tempdir().unwrap();
    let out = run_toy(d.path(), "2");
    let rows = read_trace_csv(fs::File::open(out.join("mls2mc/rep_000/trace.csv")).unwrap()).unwrap();
    assert_eq!(rows[0].kind, TraceKind::Itu);
    assert_eq!(rows[0].level, 1);
    assert!(rows.iter().any(|r| r.kind == TraceKind::Lu));
    let last = rows.last().unwrap();
    assert_eq!(last.level, 3);
    assert_eq!(last.beta, 1.0);
    for w in rows.windows(2) {
        assert!(w[1].cumulative_cost >= w[0].cumulative_cost);
        assert!(w[1].level >= w[0].level);
    }
    let m = RunManifest::read(&out.join("mls2mc/rep_000")).unwrap();
    assert!(m.is_ok());
    assert!((m.cost_formula.unwrap() - last.cumulative_cost).abs() < 1e-9);
}

#[test]
fn generate_data_observation_counts_and_idempotence() {
    let d = tempfile::tempdir().unwrap();
    for (ex, n, n_sto) in [("ex4", 25, 10), ("ex5", 25, 10), ("ex6", 49, 320)] {
        let cfg = write_config(d.path(), &format!("example = \"{ex}\"\n"));
        let mut files = Vec::new();
        for k in 0..2 {
            let out = d.path().join(format!("{ex}_{k}"));
            let st = bin()
                .args(["generate-data", "--seed", "11", "--config"])
                .arg(&cfg)
                .arg("--out")
                .arg(&out)
                .status()
                .unwrap();
            assert!(st.success());
            files.push(fs::read_to_string(out.join("dataset.json")).unwrap());
        }
        assert_eq!(files[0], files[1]);
        let data = SyntheticDataset::from_json(&files[0]).unwrap();
        assert_eq!(data.y.len(), n, "{ex}");
        assert_eq!(data.theta_true.len(), n_sto);
    }
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let code = |args: &[&str], cfg: &str| {
        let p = write_config(d.path(), cfg);
        bin()
            .args(args)
            .arg("--config")
            .arg(&p)
            .arg("--out")
            .arg(d.path().join("o"))
            .status()
            .unwrap()
            .code()
    };
    assert_eq!(code(&["run"], "particles = 1\n"), Some(2));
    assert_eq!(code(&["run"], "no_such_key = 3\n"), Some(2));
    assert_eq!(code(&["run"], "tau_star = -0.5\n"), Some(2));
    assert_eq!(code(&["generate-data"], "example = \"gaussian-linear-toy\"\n"), Some(2));
    assert_eq!(
        code(
            &["run", "--dataset", "/nonexistent/dataset.json"],
            "example = \"ex4\"\nreplicates = 1\n"
        ),
        Some(4)
    );
    // the fine level contradicts the coarse one far beyond what one bridging step can absorb
    let degenerate = r#"
example = "gaussian-linear-toy"
scheme = "mlb"
particles = 50
replicates = 2

[toy]
gains = [[1.0], [-1.0]]
y = 3.0
gamma = 0.01
"#;
    assert_eq!(code(&["run"], degenerate), Some(3));
    let m = RunManifest::read(&d.path().join("o/mlb/rep_000")).unwrap();
    assert_eq!(m.status, "failed");
    assert!(m.error.is_some());
    assert!(d.path().join("o/mlb/rep_000/trace.csv").is_file());
}

#[test]
fn compare_writes_metrics_and_rejects_mismatched_examples() {
    let d = tempfile::tempdir().unwrap();
    let out = run_toy(d.path(), "2");
    let sl = d.path().join("sl.toml");
    fs::write(&sl, TOY.replace("\"mls2mc\"", "\"single-level\"")).unwrap();
    assert!(bin()
        .args(["run", "--config"])
        .arg(&sl)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let csv_path = d.path().join("cmp.csv");
    let st = bin()
        .arg("compare")
        .arg(out.join("single-level"))
        .arg(out.join("mls2mc"))
        .arg("--out")
        .arg(&csv_path)
        .status()
        .unwrap();
    assert!(st.success());
    let text = fs::read_to_string(&csv_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "run_id,scheme,J,tau_star,metric_name,value,cost_formula,cost_counted"
    );
    let ks: Vec<&str> = text.lines().filter(|l| l.contains(",ks_theta_1,")).collect();
    assert_eq!(ks.len(), 4);
    assert!(text.contains("aggregate,mls2mc-vs-single-level,400,0.5,cost_ratio_formula,"));
    assert!(text.contains(",rel_err_evid,"));

    let ex4 = d.path().join("ex4.toml");
    fs::write(
        &ex4,
        "example = \"ex4\"\nreplicates = 1\nparticles = 20\ntau_star = 2.0\n",
    )
    .unwrap();
    let o4 = d.path().join("o4");
    bin()
        .args(["run", "--config"])
        .arg(&ex4)
        .arg("--out")
        .arg(&o4)
        .status()
        .unwrap();
    let st = bin()
        .arg("compare")
        .arg(out.join("single-level"))
        .arg(o4.join("mls2mc"))
        .arg("--out")
        .arg(d.path().join("bad.csv"))
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(2));
}
