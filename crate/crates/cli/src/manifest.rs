use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub configs: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub version: String,
    pub outputs: Vec<PathBuf>,
    pub wall_clock_secs: f64,
}

/// Collects what a command read and wrote; `finish` writes `manifest.json` into the output directory.
pub struct Recorder {
    command: String,
    configs: Vec<PathBuf>,
    seed: Option<u64>,
    outputs: Vec<PathBuf>,
    start: Instant,
}

impl Recorder {
    pub fn new(command: &str) -> Self {
        Recorder {
            command: command.into(),
            configs: Vec::new(),
            seed: None,
            outputs: Vec::new(),
            start: Instant::now(),
        }
    }

    pub fn config(&mut self, p: &Path) {
        self.configs.push(p.to_path_buf());
    }

    pub fn seed(&mut self, s: u64) {
        self.seed = Some(s);
    }

    pub fn outputs(&mut self, ps: impl IntoIterator<Item = PathBuf>) {
        self.outputs.extend(ps);
    }

    pub fn finish(self, dir: &Path) -> anyhow::Result<PathBuf> {
        let m = RunManifest {
            command: self.command,
            configs: self.configs,
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION").into(),
            outputs: self.outputs,
            wall_clock_secs: self.start.elapsed().as_secs_f64(),
        };
        std::fs::create_dir_all(dir)?;
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&m)? + "\n")?;
        Ok(path)
    }
}
