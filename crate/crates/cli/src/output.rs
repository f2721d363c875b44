//! Output files: atomic writes, the deterministic summary and the run manifest.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Digest of the resolved configuration, ignoring where outputs go.
pub fn config_digest(cfg: &Config) -> Result<String, CliError> {
    let mut c = cfg.clone();
    c.output.dir.clear();
    Ok(sha256_hex(&to_json(&c)?))
}

pub fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>, CliError> {
    let mut b = serde_json::to_vec_pretty(v).map_err(|e| CliError::Numerical(format!("json: {e}")))?;
    b.push(b'\n');
    Ok(b)
}

pub fn now_unix_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

/// Writes through a temporary file in the same directory, then renames, so a
/// failed run never leaves a truncated file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct OutputDigest<'a> {
    file: &'a str,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    started_unix_ms: u128,
    finished_unix_ms: u128,
    outputs: Vec<String>,
    /// Replaying with `--config manifest.json` reruns exactly this.
    config: &'a Config,
}

/// Files produced by one command, written together at the end.
pub struct Artifacts {
    pub files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn new() -> Self {
        Self { files: Vec::new() }
    }

    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    /// Writes the data files, then `summary.json` (built from `summary` plus
    /// the file digests) and finally `manifest.json`.
    pub fn commit<S: Serialize>(
        self,
        cfg: &Config,
        command: &str,
        summary: S,
        started_unix_ms: u128,
    ) -> Result<PathBuf, CliError> {
        let dir = PathBuf::from(&cfg.output.dir);
        std::fs::create_dir_all(&dir)?;

        #[derive(Serialize)]
        struct Summary<'a, S> {
            command: &'a str,
            version: &'static str,
            config_sha256: String,
            #[serde(flatten)]
            result: S,
            outputs: Vec<OutputDigest<'a>>,
        }
        let summary = Summary {
            command,
            version: VERSION,
            config_sha256: config_digest(cfg)?,
            result: summary,
            outputs: self
                .files
                .iter()
                .map(|(n, b)| OutputDigest { file: n, sha256: sha256_hex(b) })
                .collect(),
        };
        let summary = to_json(&summary)?;

        for (name, bytes) in &self.files {
            write_atomic(&dir.join(name), bytes)?;
        }
        write_atomic(&dir.join("summary.json"), &summary)?;
        let mut outputs: Vec<String> = self.files.iter().map(|(n, _)| n.clone()).collect();
        outputs.push("summary.json".into());
        let manifest = Manifest {
            tool: "sphb",
            version: VERSION,
            command,
            seed: cfg.sweep.seed,
            started_unix_ms,
            finished_unix_ms: now_unix_ms(),
            outputs: outputs.iter().map(|n| dir.join(n).display().to_string()).collect(),
            config: cfg,
        };
        let path = dir.join("manifest.json");
        write_atomic(&path, &to_json(&manifest)?)?;
        Ok(path)
    }
}

/// Serializes `rows` as CSV with a header line.
pub fn csv_bytes<T: Serialize>(rows: &[T], header: &[&str]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(header).map_err(|e| CliError::Numerical(format!("csv: {e}")))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Numerical(format!("csv: {e}")))?;
    }
    w.into_inner().map_err(|e| CliError::Numerical(format!("csv: {e}")))
}
