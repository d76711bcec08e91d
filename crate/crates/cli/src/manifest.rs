use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveCounts {
    pub live: Vec<u64>,
    pub update: Vec<u64>,
    pub initial: Vec<u64>,
    pub probe_discarded: Vec<u64>,
    pub probe_reused: Vec<u64>,
}

/// Everything needed to interpret one replicate's output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub config: RunConfig,
    pub library_version: String,
    pub replicate: usize,
    pub seed: u64,
    pub status: String,
    pub error: Option<String>,
    pub wall_time_s: f64,
    pub log_evidence: Option<f64>,
    pub final_level: Option<usize>,
    pub terminated_early: Option<bool>,
    pub n_steps: Option<usize>,
    pub cost_formula: Option<f64>,
    pub cost_counted: Option<f64>,
    pub cost_with_overhead: Option<f64>,
    pub solves: Option<SolveCounts>,
    /// Paths relative to the manifest's directory.
    pub trace: String,
    pub ensemble: Option<String>,
    /// Path of the dataset used, if any.
    pub dataset: Option<PathBuf>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl RunManifest {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    /// Writes `dir/manifest.json` through a temporary file and a rename.
    pub fn write_atomic(&self, dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(mls2mc::Error::from)?;
        let tmp = dir.join(".manifest.json.tmp");
        let dst = dir.join(MANIFEST_FILE);
        let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(tmp.display().to_string(), e))?;
        f.write_all(text.as_bytes())
            .and_then(|_| f.write_all(b"\n"))
            .and_then(|_| f.sync_all())
            .map_err(|e| CliError::io(tmp.display().to_string(), e))?;
        fs::rename(&tmp, &dst).map_err(|e| CliError::io(dst.display().to_string(), e))
    }

    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let p = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&p).map_err(|e| CliError::io(p.display().to_string(), e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
    }
}
