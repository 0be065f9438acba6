use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::Serialize;

/// Resolved settings of one invocation, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest<C: Serialize> {
    pub command: &'static str,
    pub version: &'static str,
    pub argv: Vec<String>,
    pub seed: Option<u64>,
    pub threads: usize,
    pub config: C,
    pub outputs: Vec<String>,
    pub finished_unix_seconds: u64,
}

impl<C: Serialize> RunManifest<C> {
    pub fn new(command: &'static str, seed: Option<u64>, threads: usize, config: C) -> Self {
        Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            argv: std::env::args().collect(),
            seed,
            threads,
            config,
            outputs: Vec::new(),
            finished_unix_seconds: 0,
        }
    }

    pub fn output(&mut self, path: impl AsRef<Path>) {
        self.outputs.push(path.as_ref().display().to_string());
    }

    /// Write to `dir/run_manifest.json`.
    pub fn write_in(self, dir: &Path) -> anyhow::Result<()> {
        self.write_to(dir.join("run_manifest.json"))
    }

    /// Write to `<file>.manifest.json`.
    pub fn write_beside(self, file: &Path) -> anyhow::Result<()> {
        let mut name = file.as_os_str().to_owned();
        name.push(".manifest.json");
        self.write_to(PathBuf::from(name))
    }

    fn write_to(mut self, path: PathBuf) -> anyhow::Result<()> {
        self.finished_unix_seconds = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let text = serde_json::to_string_pretty(&self)?;
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

/// Create a directory and its parents.
pub fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Create the parent directory of a file.
pub fn ensure_parent(file: &Path) -> anyhow::Result<()> {
    match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => ensure_dir(p),
        _ => Ok(()),
    }
}
