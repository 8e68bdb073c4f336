use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use koopcert::dynamics::SnapshotSet;
use koopcert::galerkin::GalerkinSystem;
use koopcert::io::{save_galerkin, sha256_hex, write_snapshots_csv};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::CliError;

pub const SYSTEM_DIR: &str = "sys";
pub const SNAPSHOT_FILE: &str = "snapshots.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn num(v: f64) -> String {
    format!("{v:e}")
}

/// Files written by one run, relative to the output directory.
pub struct Outputs {
    root: PathBuf,
    files: Vec<String>,
    notes: BTreeMap<String, Value>,
}

impl Outputs {
    pub fn new(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new(), notes: BTreeMap::new() })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn record(&mut self, rel: &str) {
        if !self.files.iter().any(|f| f == rel) {
            self.files.push(rel.to_string());
        }
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) {
        self.notes.insert(key.to_string(), serde_json::to_value(value).expect("note serializes"));
    }

    pub fn csv(&mut self, rel: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let path = self.path(rel);
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::data(path.display().to_string(), e.to_string()))?;
        let fail = |e: csv::Error| CliError::data(path.display().to_string(), e.to_string());
        w.write_record(header).map_err(fail)?;
        for r in rows {
            w.write_record(r).map_err(fail)?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        self.record(rel);
        Ok(())
    }

    pub fn json(&mut self, rel: &str, value: &Value) -> Result<(), CliError> {
        let path = self.path(rel);
        let mut text = serde_json::to_string_pretty(value).expect("json serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        self.record(rel);
        Ok(())
    }

    pub fn snapshots(&mut self, rel: &str, s: &SnapshotSet) -> Result<(), CliError> {
        let path = self.path(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        write_snapshots_csv(&path, s)?;
        self.record(rel);
        Ok(())
    }

    /// Saves the system under `sys/`, with the snapshots it was built from when given.
    pub fn system(&mut self, sys: &GalerkinSystem, snapshots: Option<&SnapshotSet>) -> Result<(), CliError> {
        let dir = self.path(SYSTEM_DIR);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        }
        let manifest = save_galerkin(&dir, sys)?;
        for name in manifest.matrices.keys() {
            self.record(&format!("{SYSTEM_DIR}/{name}.bin"));
        }
        self.record(&format!("{SYSTEM_DIR}/{}", koopcert::io::MANIFEST_FILE));
        if let Some(s) = snapshots {
            self.snapshots(&format!("{SYSTEM_DIR}/{SNAPSHOT_FILE}"), s)?;
        }
        Ok(())
    }

    /// Writes `manifest.json` with the config echo, versions, seed and checksums.
    /// The timestamp appears nowhere else.
    pub fn finish(mut self, command: &str, config: Value, seed: u64) -> Result<PathBuf, CliError> {
        self.files.sort();
        let mut sums = BTreeMap::new();
        for rel in &self.files {
            let p = self.root.join(rel);
            let bytes = fs::read(&p).map_err(|e| CliError::io(&p, e))?;
            sums.insert(rel.clone(), sha256_hex(&bytes));
        }
        let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let manifest = json!({
            "command": command,
            "config": config,
            "versions": { "koopcert": koopcert::VERSION, "koopcert-cli": env!("CARGO_PKG_VERSION") },
            "seed": seed,
            "created_unix": created,
            "outputs": sums,
            "notes": self.notes,
        });
        let path = self.root.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}
