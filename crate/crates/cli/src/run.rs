use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use repscore_core::CoreError;
use repscore_nn::NnError;

pub const MANIFEST_FILE: &str = "run.json";

/// Invalid flag combinations detected after parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// 2 usage/configuration, 3 data or I/O, 4 numeric failure.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return match e {
                CoreError::Config(_) => 2,
                CoreError::Numeric(_) | CoreError::Nn(NnError::NonFinite(_)) => 4,
                _ => 3,
            };
        }
        if let Some(e) = cause.downcast_ref::<NnError>() {
            return if matches!(e, NnError::NonFinite(_)) { 4 } else { 3 };
        }
    }
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Running,
    Ok,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    /// Input path → SHA-256 (directories hash their sorted file tree).
    pub input_hashes: BTreeMap<String, String>,
    pub tool_version: String,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub struct RunDir {
    pub path: PathBuf,
    manifest: RunManifest,
}

impl RunDir {
    /// Creates `root/<run_id>` (default id `<command>-<unix time>-<pid>`).
    /// An existing non-empty directory is refused unless `reuse` is set.
    pub fn create(root: &Path, run_id: Option<&str>, command: &str, reuse: bool) -> Result<Self> {
        let id = match run_id {
            Some(id) => id.to_string(),
            None => format!("{command}-{}-{}", now(), std::process::id()),
        };
        if id.is_empty() || id.contains(['/', '\\']) || id.starts_with('.') {
            return Err(usage(format!("invalid run id '{id}'")));
        }
        Self::at(root.join(id), command, reuse)
    }

    /// Uses `path` itself as the run directory.
    pub fn at(path: PathBuf, command: &str, reuse: bool) -> Result<Self> {
        if !reuse && path.exists() && fs::read_dir(&path).map(|mut d| d.next().is_some()).unwrap_or(true) {
            return Err(usage(format!("run directory {} already exists and is not empty", path.display())));
        }
        fs::create_dir_all(&path).with_context(|| format!("creating {}", path.display()))?;
        let manifest = RunManifest {
            command: command.to_string(),
            argv: std::env::args().collect(),
            config: serde_json::Value::Null,
            seeds: BTreeMap::new(),
            input_hashes: BTreeMap::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: now(),
            finished_unix: None,
            status: Status::Running,
            error: None,
        };
        let run = RunDir { path, manifest };
        run.write()?;
        Ok(run)
    }

    pub fn set_config(&mut self, config: &impl Serialize) -> Result<()> {
        self.manifest.config = serde_json::to_value(config)?;
        self.write()
    }

    pub fn seed(&mut self, name: &str, seed: u64) {
        self.manifest.seeds.insert(name.to_string(), seed);
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let digest = hash_path(path)?;
        self.manifest.input_hashes.insert(path.display().to_string(), digest);
        self.write()
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    fn write(&self) -> Result<()> {
        let p = self.file(MANIFEST_FILE);
        fs::write(&p, serde_json::to_string_pretty(&self.manifest)?).with_context(|| format!("writing {}", p.display()))
    }

    /// Records the outcome; a failed run keeps its partial files but is
    /// marked as failed in the manifest.
    pub fn finish(mut self, outcome: &Result<()>) -> Result<()> {
        self.manifest.finished_unix = Some(now());
        match outcome {
            Ok(()) => self.manifest.status = Status::Ok,
            Err(e) => {
                self.manifest.status = Status::Failed;
                self.manifest.error = Some(format!("{e:#}"));
            }
        }
        self.write()
    }
}

/// SHA-256 of a file, or of a directory's sorted file tree (relative path
/// and contents of every file, run manifests excluded).
pub fn hash_path(path: &Path) -> Result<String> {
    let mut h = Sha256::new();
    if path.is_dir() {
        let mut files = Vec::new();
        collect_files(path, path, &mut files)?;
        files.sort();
        for rel in files {
            let bytes = fs::read(path.join(&rel)).with_context(|| format!("reading {}", path.join(&rel).display()))?;
            h.update(rel.as_bytes());
            h.update([0]);
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(&bytes);
        }
    } else {
        h.update(fs::read(path).with_context(|| format!("reading {}", path.display()))?);
    }
    Ok(hex::encode(h.finalize()))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let p = entry?.path();
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else if p.file_name().is_some_and(|n| n != MANIFEST_FILE) {
            let rel = p.strip_prefix(root).expect("under root");
            out.push(rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_kind() {
        assert_eq!(exit_code(&usage("x")), 2);
        assert_eq!(exit_code(&CoreError::Config("x".into()).into()), 2);
        assert_eq!(exit_code(&CoreError::Data("x".into()).into()), 3);
        assert_eq!(exit_code(&CoreError::Numeric("x".into()).into()), 4);
        assert_eq!(exit_code(&CoreError::Nn(NnError::NonFinite("x".into())).into()), 4);
        assert_eq!(exit_code(&anyhow::Error::from(CoreError::Data("x".into())).context("while loading")), 3);
    }

    #[test]
    fn directory_hash_ignores_manifest_and_tracks_content() {
        let d = tempfile::tempdir().unwrap();
        fs::create_dir(d.path().join("sub")).unwrap();
        fs::write(d.path().join("sub/a.csv"), "1").unwrap();
        let h0 = hash_path(d.path()).unwrap();
        fs::write(d.path().join(MANIFEST_FILE), "{}").unwrap();
        assert_eq!(hash_path(d.path()).unwrap(), h0);
        fs::write(d.path().join("sub/a.csv"), "2").unwrap();
        assert_ne!(hash_path(d.path()).unwrap(), h0);
    }
}
