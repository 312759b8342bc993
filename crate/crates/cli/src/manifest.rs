use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::exit::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "run.json";

/// Record of one invocation, written into the run directory before any
/// other output so that the run can be repeated with `rerun`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Command line as invoked, program name first.
    pub argv: Vec<String>,
    /// Fully resolved configuration of the command.
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub version: String,
    pub output_dir: PathBuf,
    pub workers: usize,
}

impl RunManifest {
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Invocation context shared by all commands.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub argv: Vec<String>,
    pub workers: usize,
}

impl RunContext {
    /// Creates `out` and writes its manifest.
    pub fn begin(
        &self,
        command: &str,
        out: &Path,
        config: serde_json::Value,
        seed: Option<u64>,
    ) -> CliResult<RunManifest> {
        fs::create_dir_all(out).map_err(|e| CliError::io(format!("{}: {e}", out.display())))?;
        let manifest = RunManifest {
            command: command.to_string(),
            argv: self.argv.clone(),
            config,
            seed,
            version: concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")).to_string(),
            output_dir: out.to_path_buf(),
            workers: self.workers,
        };
        fs::write(out.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
        Ok(manifest)
    }
}
