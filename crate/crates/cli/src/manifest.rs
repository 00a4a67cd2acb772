use std::path::Path;
use std::time::Instant;

use proxyvote_core::io::write_atomic;
use serde::{Deserialize, Serialize};

use crate::config::{runtime, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn version() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}

/// Written last, into the output directory. Everything except `wall_time_s`
/// is a function of the config; `outputs` are relative to the directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
}

/// Collects output paths while a command runs.
pub struct Recorder {
    started: Instant,
    outputs: Vec<String>,
}

impl Recorder {
    pub fn start() -> Self {
        Self {
            started: Instant::now(),
            outputs: Vec::new(),
        }
    }

    /// Atomically writes `rel` under `out` and records it.
    pub fn write(&mut self, out: &Path, rel: &str, bytes: &[u8]) -> CliResult<()> {
        write_atomic(&out.join(rel), bytes)?;
        self.outputs.push(rel.to_string());
        Ok(())
    }

    pub fn record(&mut self, rel: String) {
        self.outputs.push(rel);
    }

    pub fn finish(
        mut self,
        out: &Path,
        command: &str,
        config: &impl Serialize,
        seeds: Vec<u64>,
    ) -> CliResult<RunManifest> {
        self.outputs.sort();
        let m = RunManifest {
            command: command.to_string(),
            version: version(),
            config: serde_json::to_value(config).map_err(runtime)?,
            seeds,
            outputs: self.outputs,
            wall_time_s: self.started.elapsed().as_secs_f64(),
        };
        let text = serde_json::to_string_pretty(&m).map_err(runtime)?;
        write_atomic(&out.join(MANIFEST_FILE), format!("{text}\n").as_bytes())?;
        Ok(m)
    }
}
