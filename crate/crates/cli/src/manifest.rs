use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "run_manifest.json";

/// Provenance of one command invocation, written next to its outputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub data_hash: String,
    pub seed: u64,
    pub tool_version: String,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn start(command: &str, seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            config_hash: String::new(),
            data_hash: String::new(),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: now(),
            finished_at: String::new(),
            outputs: Vec::new(),
        }
    }

    pub fn finish(mut self, run_dir: &Path) -> Result<PathBuf> {
        self.finished_at = now();
        let path = run_dir.join(MANIFEST_NAME);
        write_json(&path, &self)?;
        Ok(path)
    }
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn collect_files(path: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)
            .with_context(|| format!("reading {}", path.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        for e in entries {
            collect_files(&e, out)?;
        }
    } else {
        out.push(path.to_path_buf());
    }
    Ok(())
}

/// SHA-256 over the relative names and contents of every file under `inputs`.
pub fn hash_inputs(inputs: &[&Path]) -> Result<String> {
    let mut hasher = Sha256::new();
    for root in inputs {
        let mut files = Vec::new();
        collect_files(root, &mut files)?;
        for f in files {
            let rel = f.strip_prefix(root).unwrap_or(&f);
            hasher.update(rel.to_string_lossy().as_bytes());
            hasher.update([0]);
            let bytes = fs::read(&f).with_context(|| format!("reading {}", f.display()))?;
            hasher.update((bytes.len() as u64).to_le_bytes());
            hasher.update(&bytes);
        }
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Resolves `--out`: a path ending in `.json` or `.csv` names the primary
/// output file inside its parent run directory; anything else is the run
/// directory, holding `default_name`.
pub fn resolve_out(out: &Path, default_name: &str) -> Result<(PathBuf, PathBuf)> {
    let is_file = matches!(out.extension().and_then(|e| e.to_str()), Some("json" | "csv"));
    let (dir, primary) = if is_file {
        let dir = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        (dir.to_path_buf(), out.to_path_buf())
    } else {
        (out.to_path_buf(), out.join(default_name))
    };
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok((dir, primary))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_tracks_content_and_names() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a"), "1").unwrap();
        let h1 = hash_inputs(&[dir.path()]).unwrap();
        assert_eq!(h1, hash_inputs(&[dir.path()]).unwrap());
        fs::write(dir.path().join("a"), "2").unwrap();
        let h2 = hash_inputs(&[dir.path()]).unwrap();
        assert_ne!(h1, h2);
        fs::rename(dir.path().join("a"), dir.path().join("b")).unwrap();
        assert_ne!(h2, hash_inputs(&[dir.path()]).unwrap());
    }

    #[test]
    fn out_forms() {
        let dir = tempfile::tempdir().unwrap();
        let (d, p) = resolve_out(&dir.path().join("run"), "report.json").unwrap();
        assert_eq!(p, dir.path().join("run/report.json"));
        assert!(d.is_dir());
        let (d, p) = resolve_out(&dir.path().join("x/r.json"), "report.json").unwrap();
        assert_eq!((d, p), (dir.path().join("x"), dir.path().join("x/r.json")));
    }
}
