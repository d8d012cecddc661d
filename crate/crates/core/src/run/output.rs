use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ErrorKind, Result, RunConfig, RunError};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    /// Relative artifact path to hex SHA-256 of its bytes.
    pub artifacts: BTreeMap<String, String>,
    pub stages: Vec<StageTime>,
    pub created_unix_ms: u128,
}

/// `manifest.json` for full runs, `manifest-<command>.json` otherwise, so
/// single-stage commands sharing an output directory keep their own records.
pub fn manifest_name(command: &str) -> String {
    if command == "report" {
        MANIFEST_FILE.to_string()
    } else {
        format!("manifest-{command}.json")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn io_err(stage: &str, path: &Path, e: std::io::Error) -> RunError {
    RunError::new(stage, ErrorKind::Data, format!("{}: {e}", path.display()))
}

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// Single writer for one output directory: records checksums of every
/// artifact and per-stage wall time, then writes the manifest last.
pub struct Artifacts {
    root: PathBuf,
    checksums: BTreeMap<String, String>,
    stages: Vec<StageTime>,
    current: Option<(String, Instant)>,
}

impl Artifacts {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into(), checksums: BTreeMap::new(), stages: Vec::new(), current: None }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Closes the running stage (if any) and starts timing `name`.
    pub fn stage(&mut self, name: &str) {
        self.end_stage();
        self.current = Some((name.to_string(), Instant::now()));
    }

    fn end_stage(&mut self) {
        if let Some((name, start)) = self.current.take() {
            self.stages.push(StageTime { stage: name, seconds: start.elapsed().as_secs_f64() });
        }
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(rel);
        write_atomic(&path, bytes).map_err(|e| io_err("write", &path, e))?;
        self.checksums.insert(rel.to_string(), sha256_hex(bytes));
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<PathBuf> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| RunError::new("write", ErrorKind::Data, e.to_string()))?;
        bytes.push(b'\n');
        self.write(rel, &bytes)
    }

    pub fn write_table(&mut self, rel: &str, table: &Table) -> Result<PathBuf> {
        self.write(rel, &table.to_csv())
    }

    pub fn checksums(&self) -> &BTreeMap<String, String> {
        &self.checksums
    }

    pub fn finish(mut self, command: &str, cfg: &RunConfig) -> Result<RunManifest> {
        self.end_stage();
        let manifest = RunManifest {
            tool: "triage".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: serde_json::to_value(cfg).map_err(|e| RunError::new("manifest", ErrorKind::Data, e.to_string()))?,
            artifacts: self.checksums.clone(),
            stages: self.stages.clone(),
            created_unix_ms: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis()),
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| RunError::new("manifest", ErrorKind::Data, e.to_string()))?;
        bytes.push(b'\n');
        let path = self.root.join(manifest_name(command));
        write_atomic(&path, &bytes).map_err(|e| io_err("manifest", &path, e))?;
        Ok(manifest)
    }
}

/// Column-named rows rendered as comma-delimited text.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory write")
    }
}

pub fn num(v: f64) -> String {
    v.to_string()
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}
