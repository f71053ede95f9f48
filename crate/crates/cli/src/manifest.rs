use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

pub const MANIFEST_SCHEMA: &str = "bilinear-dd/manifest/v1";

/// Schema identifiers for every file the CLI writes.
pub mod schema {
    pub const DATA_RECORD: &str = "bilinear-dd/data-record/v1";
    pub const DIAGNOSTICS: &str = "bilinear-dd/diagnostics/v1";
    pub const DESIGN: &str = "bilinear-dd/design/v1";
    pub const SWEEP_JSON: &str = "bilinear-dd/sweep/v1";
    pub const SWEEP_CSV: &str = "bilinear-dd/sweep-csv/v1";
    pub const TRACE_CSV: &str = "bilinear-dd/trace-csv/v1";
    pub const VERIFICATION: &str = "bilinear-dd/verification/v1";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: PathBuf,
    pub schema: String,
}

/// Record of one CLI run, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: String,
    pub tool_version: String,
    pub command: String,
    /// Arguments after the program name; `replay` re-runs exactly these.
    pub args: Vec<String>,
    pub working_dir: PathBuf,
    pub inputs: Vec<PathBuf>,
    /// Fully resolved configuration, defaults included.
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<OutputFile>,
    pub exit_code: u8,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let m: RunManifest =
            serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
        anyhow::ensure!(
            m.schema_version == MANIFEST_SCHEMA,
            "unsupported manifest schema {:?} (expected {MANIFEST_SCHEMA})",
            m.schema_version
        );
        Ok(m)
    }
}

/// `design.json` -> `design.manifest.json`.
pub fn manifest_path(primary_output: &Path) -> PathBuf {
    sibling(primary_output, "manifest.json")
}

/// `dir/stem.json` -> `dir/stem.<ext>`.
pub fn sibling(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}
