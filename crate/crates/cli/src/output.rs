use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Output directory that remembers every file written through it.
pub struct Output {
    root: PathBuf,
    files: Vec<PathBuf>,
}

impl Output {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Absolute path for `name`, registered for the manifest.
    pub fn file(&mut self, name: &str) -> Result<PathBuf, CliError> {
        let p = self.root.join(name);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent)?;
        }
        self.files.push(PathBuf::from(name));
        Ok(p)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let p = self.file(name)?;
        std::fs::write(p, serde_json::to_string_pretty(value)? + "\n")?;
        Ok(())
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
        let p = self.file(name)?;
        let mut w = csv::Writer::from_path(p)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r.iter().map(|x| format!("{x:.17e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Adopts files written by a nested output rooted below this one.
    pub fn absorb(&mut self, prefix: &str, inner: Output) {
        self.files.extend(inner.files.into_iter().map(|f| Path::new(prefix).join(f)));
    }

    /// `manifest.json` with the config hash, versions and a checksum per file.
    pub fn finish(mut self, subcommand: &str, config_text: &str, seed: u64) -> Result<PathBuf, CliError> {
        self.files.sort();
        self.files.dedup();
        let mut entries = Vec::with_capacity(self.files.len());
        for f in &self.files {
            let bytes = std::fs::read(self.root.join(f))?;
            entries.push(serde_json::json!({
                "path": f.to_string_lossy().replace('\\', "/"),
                "bytes": bytes.len(),
                "sha256": hex::encode(Sha256::digest(&bytes)),
            }));
        }
        let manifest = serde_json::json!({
            "subcommand": subcommand,
            "seed": seed,
            "config_sha256": hex::encode(Sha256::digest(config_text.as_bytes())),
            "config": config_text,
            "versions": {
                "hopf_cl": hopf_cl::VERSION,
                "hopf_cl_cli": env!("CARGO_PKG_VERSION"),
            },
            "files": entries,
        });
        let p = self.root.join("manifest.json");
        std::fs::write(&p, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(p)
    }
}
