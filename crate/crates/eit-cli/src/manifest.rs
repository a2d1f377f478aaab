//! Run manifests: the provenance receipt written next to every primary
//! output. Re-running the same subcommand with a manifest's recorded
//! seeds and configuration reproduces all numeric outputs exactly; only
//! the manifest's own timestamp differs.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use eit::SimConfig;
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub command: &'static str,
    pub created_unix: u64,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub seeds: BTreeMap<&'static str, u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<SimConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub fingerprints: BTreeMap<&'static str, String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &'static str) -> Self {
        let created_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            tool: "eit",
            tool_version: env!("CARGO_PKG_VERSION"),
            command,
            created_unix,
            seeds: BTreeMap::new(),
            config: None,
            alpha: None,
            fingerprints: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn seed(&mut self, name: &'static str, value: u64) -> &mut Self {
        self.seeds.insert(name, value);
        self
    }

    pub fn fingerprint(&mut self, name: &'static str, value: String) -> &mut Self {
        self.fingerprints.insert(name, value);
        self
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.inputs.push(path.display().to_string());
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.display().to_string());
        self
    }

    /// Write the manifest next to the primary output and return its path.
    pub fn write(&mut self, primary_output: &Path) -> anyhow::Result<PathBuf> {
        let path = run_manifest_path(primary_output);
        self.outputs.push(path.display().to_string());
        let file = File::create(&path)
            .with_context(|| format!("creating run manifest {}", path.display()))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(path)
    }
}

/// Manifest path for a primary output: the same name with ".run.json"
/// appended, so the pairing survives renames of the directory.
pub fn run_manifest_path(primary_output: &Path) -> PathBuf {
    let mut name = primary_output.file_name().unwrap_or_default().to_os_string();
    name.push(".run.json");
    primary_output.with_file_name(name)
}

/// Serialize a report as pretty JSON with a trailing newline.
pub fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let file =
        File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}
