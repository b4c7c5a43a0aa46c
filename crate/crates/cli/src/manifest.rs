use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use hsdemix::{Error, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

fn digest(path: &Path) -> Result<FileDigest> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(FileDigest {
        path: path.to_path_buf(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

/// Record of one invocation: enough to rerun it and to check its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub flags: Value,
    pub inputs: Vec<FileDigest>,
    pub seed: Option<u64>,
    pub version: &'static str,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<FileDigest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Collects inputs read and outputs written while a subcommand runs.
pub struct Run {
    prefix: PathBuf,
    started: Instant,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Run {
    pub fn new(prefix: &Path) -> Self {
        Self {
            prefix: prefix.to_path_buf(),
            started: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// `<prefix>_<suffix>`.
    pub fn path(&self, suffix: &str) -> PathBuf {
        let mut p = self.prefix.clone().into_os_string();
        p.push("_");
        p.push(suffix);
        p.into()
    }

    pub fn input(&mut self, path: &Path) {
        if !self.inputs.iter().any(|p| p == path) {
            self.inputs.push(path.to_path_buf());
        }
    }

    pub fn output(&mut self, path: PathBuf) {
        self.outputs.push(path);
    }

    pub fn write_json<T: Serialize>(&mut self, suffix: &str, value: &T) -> Result<PathBuf> {
        let path = self.path(suffix);
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::format(suffix, e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        self.output(path.clone());
        Ok(path)
    }

    pub fn write_text(&mut self, suffix: &str, text: &str) -> Result<PathBuf> {
        let path = self.path(suffix);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        self.output(path.clone());
        Ok(path)
    }

    /// Write the manifest last so it can digest every output.
    pub fn finish(
        self,
        subcommand: &str,
        flags: Value,
        seed: Option<u64>,
        error: Option<String>,
    ) -> Result<PathBuf> {
        let inputs = self
            .inputs
            .iter()
            .filter(|p| p.exists())
            .map(|p| digest(p))
            .collect::<Result<Vec<_>>>()?;
        let outputs = self.outputs.iter().map(|p| digest(p)).collect::<Result<Vec<_>>>()?;
        let manifest = RunManifest {
            subcommand: subcommand.to_string(),
            flags,
            inputs,
            seed,
            version: env!("CARGO_PKG_VERSION"),
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            outputs,
            error,
        };
        let path = self.path("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths_join_prefix_and_suffix() {
        let run = Run::new(Path::new("out/run1"));
        assert_eq!(run.path("roc.csv"), PathBuf::from("out/run1_roc.csv"));
    }

    #[test]
    fn manifest_digests_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = Run::new(&dir.path().join("m"));
        run.write_text("a.txt", "abc").unwrap();
        let path = run.finish("test", Value::Null, Some(4), None).unwrap();
        let v: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(
            v["outputs"][0]["sha256"],
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(v["seed"], 4);
        assert!(v.get("error").is_none());
    }
}
