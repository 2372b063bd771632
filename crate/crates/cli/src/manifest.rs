use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub seed: u64,
    /// Paths relative to the run directory, sorted.
    pub outputs: Vec<String>,
    /// The only wall-clock value the pipeline writes anywhere.
    pub finished_unix: u64,
}

/// Index of what each command produced in a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub commands: BTreeMap<String, CommandRecord>,
}

impl Default for Manifest {
    fn default() -> Self {
        Manifest { tool: "erd".into(), version: env!("CARGO_PKG_VERSION").into(), commands: BTreeMap::new() }
    }
}

impl Manifest {
    pub fn load(run_dir: &Path) -> Result<Self, CliError> {
        let path = run_dir.join(MANIFEST_FILE);
        match std::fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Manifest::default()),
            Err(e) => Err(CliError::io(path, e)),
        }
    }

    /// Adds or replaces the entry for `command` and writes the manifest back.
    pub fn record(run_dir: &Path, command: &str, seed: u64, outputs: &[PathBuf]) -> Result<(), CliError> {
        let mut m = Manifest::load(run_dir)?;
        let mut rel: Vec<String> = outputs
            .iter()
            .map(|p| p.strip_prefix(run_dir).unwrap_or(p).to_string_lossy().into_owned())
            .collect();
        rel.sort();
        rel.dedup();
        let finished_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        m.commands.insert(command.to_string(), CommandRecord { seed, outputs: rel, finished_unix });
        let path = run_dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(path, e))
    }
}
