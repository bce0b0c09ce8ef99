//! Run manifests: every command records what was asked, what was read and
//! written, and when, into `manifest_<command>.json` in the run directory.

use std::path::{Path, PathBuf};
use std::process::Command;

use chrono::{SecondsFormat, Utc};
use serde::Serialize;

use crate::CliResult;

/// Written with status `running` before the work starts and rewritten with
/// the outcome afterwards, so an interrupted run is visible as such. The
/// argv and config snapshot make the run reproducible from this file alone.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub git_describe: String,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub status: String,
}

fn timestamp() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|out| out.status.success())
        .map(|out| String::from_utf8_lossy(&out.stdout).trim().to_owned())
        .unwrap_or_else(|| "unknown".into())
}

impl RunManifest {
    fn new(
        command: &str,
        config: serde_json::Value,
        seed: Option<u64>,
        inputs: Vec<PathBuf>,
    ) -> Self {
        Self {
            command: command.into(),
            argv: std::env::args().collect(),
            config,
            seed,
            inputs,
            outputs: Vec::new(),
            git_describe: git_describe(),
            started_at: timestamp(),
            finished_at: None,
            status: "running".into(),
        }
    }

    fn save(&self, path: &Path) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, json + "\n")
    }
}

/// Runs `body` bracketed by the manifest writes. The body appends whatever
/// files it produces to `manifest.outputs`.
pub fn with_manifest(
    out_dir: &Path,
    command: &str,
    config: serde_json::Value,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    body: impl FnOnce(&mut RunManifest) -> CliResult,
) -> CliResult {
    let path = out_dir.join(format!("manifest_{command}.json"));
    let mut manifest = RunManifest::new(command, config, seed, inputs);
    manifest.save(&path)?;
    let result = body(&mut manifest);
    manifest.finished_at = Some(timestamp());
    manifest.status = match &result {
        Ok(()) => "ok".into(),
        Err(err) => format!("failed: {err}"),
    };
    manifest.save(&path)?;
    result
}
