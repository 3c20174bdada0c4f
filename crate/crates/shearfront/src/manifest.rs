//! Reproducibility manifests: config snapshot, seeds, wall times, and
//! content digests of every output file.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

/// Record of one completed experiment run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub code_version: String,
    /// Full TOML snapshot of the validated config.
    pub config_toml: String,
    pub seeds: Vec<u64>,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    /// Output file name → SHA-256 content digest (hex), sorted by name.
    pub outputs: BTreeMap<String, String>,
    /// Statistical-quality warnings (recorded, not fatal).
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn new(experiment: String, config_toml: String, seeds: Vec<u64>) -> Self {
        Self {
            experiment,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            config_toml,
            seeds,
            started_unix_ms: now_ms(),
            finished_unix_ms: 0,
            outputs: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    /// Digest a finished output file and record it under its file name.
    pub fn record_output(&mut self, path: &Path) -> std::io::Result<()> {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        self.outputs.insert(name, digest_file(path)?);
        Ok(())
    }

    pub fn finish(&mut self) {
        self.finished_unix_ms = now_ms();
    }

    pub fn write_json(&self, path: &Path) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e))?;
        std::fs::write(path, json)
    }

    pub fn read_json(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// SHA-256 content digest of a file, lowercase hex.
pub fn digest_file(path: &Path) -> std::io::Result<String> {
    let mut file = std::fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_stable_and_content_sensitive() {
        let dir = std::env::temp_dir().join("shearfront_manifest_test");
        std::fs::create_dir_all(&dir).unwrap();
        let p1 = dir.join("a.csv");
        let p2 = dir.join("b.csv");
        std::fs::write(&p1, "x,y\n1,2\n").unwrap();
        std::fs::write(&p2, "x,y\n1,3\n").unwrap();
        let d1 = digest_file(&p1).unwrap();
        let d1_again = digest_file(&p1).unwrap();
        let d2 = digest_file(&p2).unwrap();
        assert_eq!(d1, d1_again);
        assert_ne!(d1, d2);
        assert_eq!(d1.len(), 64);
    }

    #[test]
    fn manifest_round_trips_through_json() {
        let dir = std::env::temp_dir().join("shearfront_manifest_test");
        std::fs::create_dir_all(&dir).unwrap();
        let out = dir.join("out.csv");
        std::fs::write(&out, "# schema: shearfront.test.v1\na\n1\n").unwrap();
        let mut m = RunManifest::new(
            "covariance_check".into(),
            "experiment='covariance_check'".into(),
            vec![1, 2],
        );
        m.record_output(&out).unwrap();
        m.warnings.push("example warning".into());
        m.finish();
        let path = dir.join("manifest.json");
        m.write_json(&path).unwrap();
        let back = RunManifest::read_json(&path).unwrap();
        assert_eq!(m, back);
        assert!(back.outputs.contains_key("out.csv"));
    }
}
