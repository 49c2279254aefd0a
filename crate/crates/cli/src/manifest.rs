//! Run manifests: enough to re-run a command and get the same outputs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Result;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const MANIFEST_SCHEMA: &str = "lsk.manifest/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub command: String,
    /// Arguments after the program name, as given.
    pub argv: Vec<String>,
    pub config: Value,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub wall_clock_seconds: f64,
    pub clamp_events: u64,
    pub threads: usize,
}

/// Collects what a command reads and writes while it runs.
pub struct Recorder {
    command: String,
    argv: Vec<String>,
    config: Value,
    seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    start: Instant,
}

impl Recorder {
    pub fn new<C: Serialize>(command: &str, argv: &[String], config: &C, seed: Option<u64>) -> Self {
        lsk_core::lorentz::reset_clamp_events();
        Self {
            command: command.into(),
            argv: argv.to_vec(),
            config: serde_json::to_value(config).unwrap_or(Value::Null),
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            start: Instant::now(),
        }
    }

    pub fn input(&mut self, p: &Path) {
        self.inputs.push(p.to_path_buf());
    }

    pub fn outputs(&mut self, ps: impl IntoIterator<Item = PathBuf>) {
        self.outputs.extend(ps);
    }

    pub fn finish(self, path: &Path) -> Result<PathBuf> {
        let m = RunManifest {
            schema: MANIFEST_SCHEMA.into(),
            command: self.command,
            argv: self.argv,
            config: self.config,
            seed: self.seed,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            inputs: self.inputs,
            outputs: self.outputs,
            wall_clock_seconds: self.start.elapsed().as_secs_f64(),
            clamp_events: lsk_core::lorentz::clamp_events(),
            threads: crate::worker_threads(),
        };
        lsk_core::io::write_json(path, &m)?;
        Ok(path.to_path_buf())
    }
}

/// `<out>.manifest.json` next to a single output file.
pub fn beside(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}
