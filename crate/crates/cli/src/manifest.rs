//! Run manifest: everything needed to reproduce a command, written next to
//! its outputs as `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::jobs::Job;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// Resolved command and parameters (`"command"` names the subcommand).
    pub job: Job,
    pub seed: Option<u64>,
    pub rig: Option<PathBuf>,
    pub inputs: Vec<PathBuf>,
    pub out: PathBuf,
    /// Files written into `out`, in order.
    pub outputs: Vec<String>,
    /// Thread count requested; informational, results do not depend on it.
    pub threads: Option<u64>,
}

impl RunManifest {
    pub fn new(job: Job, out: PathBuf, outputs: Vec<String>, threads: Option<u64>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: job.seed(),
            rig: job.rig().map(Path::to_path_buf),
            inputs: job.inputs(),
            job,
            out,
            outputs,
            threads,
        }
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
    }

    /// Writes `out/manifest.json` via a temporary file and a rename, so a
    /// manifest is either complete or absent.
    pub fn write(&self) -> CliResult<()> {
        let path = self.out.join(MANIFEST_NAME);
        let tmp = self.out.join(format!(".{MANIFEST_NAME}.tmp"));
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::validation(e.to_string()))? + "\n";
        fs::write(&tmp, text).map_err(|e| CliError::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| CliError::io(&path, e))
    }
}
