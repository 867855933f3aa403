//! Run manifests: what ran, with which settings, on which inputs, and
//! what it produced.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub tool_version: String,
    pub config: Value,
    pub seeds: BTreeMap<String, u64>,
    /// Input path → sha256.
    pub inputs: BTreeMap<String, String>,
    /// Output file name (relative to the output directory) → sha256.
    pub outputs: BTreeMap<String, String>,
}

pub struct ManifestBuilder {
    manifest: RunManifest,
}

impl ManifestBuilder {
    pub fn new<C: Serialize>(subcommand: &str, config: &C) -> anyhow::Result<Self> {
        Ok(ManifestBuilder {
            manifest: RunManifest {
                subcommand: subcommand.into(),
                tool_version: env!("CARGO_PKG_VERSION").into(),
                config: serde_json::to_value(config)?,
                seeds: BTreeMap::new(),
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
            },
        })
    }

    pub fn seed(&mut self, name: &str, seed: u64) -> &mut Self {
        self.manifest.seeds.insert(name.into(), seed);
        self
    }

    pub fn input(&mut self, path: &Path) -> anyhow::Result<&mut Self> {
        let digest = digest_path(path)?;
        self.manifest.inputs.insert(path.display().to_string(), digest);
        Ok(self)
    }

    /// Hashes every listed output file under `dir` and writes the manifest
    /// there.
    pub fn finish(mut self, dir: &Path, outputs: &[String]) -> anyhow::Result<RunManifest> {
        for name in outputs {
            self.manifest.outputs.insert(name.clone(), digest_file(&dir.join(name))?);
        }
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(self.manifest)
    }
}

pub fn digest_file(path: &Path) -> anyhow::Result<String> {
    let mut f = fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// A file's digest, or for a directory the digest of its sorted
/// `name\tdigest` listing (the manifest file itself excluded).
pub fn digest_path(path: &Path) -> anyhow::Result<String> {
    if !path.is_dir() {
        return digest_file(path);
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(path)
        .with_context(|| format!("reading {}", path.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    entries.sort();
    let mut h = Sha256::new();
    for e in entries {
        let name = e.file_name().unwrap_or_default().to_string_lossy().into_owned();
        if name == MANIFEST_FILE {
            continue;
        }
        h.update(format!("{name}\t{}\n", digest_path(&e)?).as_bytes());
    }
    Ok(hex::encode(h.finalize()))
}
