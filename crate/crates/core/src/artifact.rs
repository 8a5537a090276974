//! Content hashing and provenance manifests.
//!
//! Every artifact `foo` gets a sidecar `foo.manifest.json` recording its
//! content hash, the producing command line, the effective config and the
//! hashes of the artifacts it was built from. `verify_chain` walks those
//! links and recomputes every hash.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_SUFFIX: &str = ".manifest.json";
pub const META_SUFFIX: &str = ".meta.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn manifest_path(artifact: &Path) -> PathBuf {
    with_suffix(artifact, MANIFEST_SUFFIX)
}

pub fn meta_path(artifact: &Path) -> PathBuf {
    with_suffix(artifact, META_SUFFIX)
}

/// Hash of an artifact's content.
///
/// A file hashes together with its `.meta.json` sidecar if present. A
/// directory hashes the sorted list of its files (provenance manifests
/// excluded).
pub fn content_hash(path: &Path) -> Result<String> {
    let mut h = Sha256::new();
    if path.is_dir() {
        let mut names: Vec<String> = fs::read_dir(path)?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_file())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| !n.ends_with(MANIFEST_SUFFIX))
            .collect();
        names.sort();
        for n in names {
            let bytes = fs::read(path.join(&n))?;
            h.update(n.as_bytes());
            h.update([0]);
            h.update(sha256_hex(&bytes).as_bytes());
            h.update(b"\n");
        }
    } else {
        h.update(fs::read(path)?);
        let meta = meta_path(path);
        if meta.is_file() {
            h.update(b"\0meta\0");
            h.update(fs::read(meta)?);
        }
    }
    Ok(hex::encode(h.finalize()))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Upstream {
    pub kind: String,
    pub path: PathBuf,
    pub hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtifactManifest {
    pub kind: String,
    pub content_hash: String,
    pub command_line: Vec<String>,
    pub config: BTreeMap<String, String>,
    pub config_hash: String,
    pub upstream: Vec<Upstream>,
}

pub fn config_hash(config: &BTreeMap<String, String>) -> String {
    let mut text = String::new();
    for (k, v) in config {
        text.push_str(k);
        text.push('=');
        text.push_str(v);
        text.push('\n');
    }
    sha256_hex(text.as_bytes())
}

impl ArtifactManifest {
    /// Hashes `artifact` (already written) and its upstream artifacts.
    pub fn build(
        kind: &str,
        artifact: &Path,
        command_line: Vec<String>,
        config: BTreeMap<String, String>,
        upstream: &[(&str, &Path)],
    ) -> Result<Self> {
        let upstream = upstream
            .iter()
            .map(|(k, p)| {
                Ok(Upstream {
                    kind: k.to_string(),
                    path: p.to_path_buf(),
                    hash: content_hash(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ArtifactManifest {
            kind: kind.to_string(),
            content_hash: content_hash(artifact)?,
            command_line,
            config_hash: config_hash(&config),
            config,
            upstream,
        })
    }

    pub fn write(&self, artifact: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(manifest_path(artifact), text + "\n")?;
        Ok(())
    }

    pub fn read(artifact: &Path) -> Result<Self> {
        let path = manifest_path(artifact);
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::Artifact(format!("cannot read manifest {}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Recomputes the hash of `artifact` and, recursively, of every upstream
/// artifact that has its own manifest. Returns the verified paths in
/// visiting order.
pub fn verify_chain(artifact: &Path) -> Result<Vec<PathBuf>> {
    let mut seen = Vec::new();
    verify_into(artifact, &mut seen)?;
    Ok(seen)
}

fn verify_into(artifact: &Path, seen: &mut Vec<PathBuf>) -> Result<()> {
    if seen.iter().any(|p| p == artifact) {
        return Ok(());
    }
    let m = ArtifactManifest::read(artifact)?;
    let actual = content_hash(artifact)?;
    if actual != m.content_hash {
        return Err(Error::Artifact(format!(
            "{} was modified: manifest says {}, content hashes to {actual}",
            artifact.display(),
            m.content_hash
        )));
    }
    if config_hash(&m.config) != m.config_hash {
        return Err(Error::Artifact(format!("{}: config hash mismatch", artifact.display())));
    }
    seen.push(artifact.to_path_buf());
    for up in &m.upstream {
        let actual = content_hash(&up.path).map_err(|e| {
            Error::Artifact(format!("upstream {} of {}: {e}", up.path.display(), artifact.display()))
        })?;
        if actual != up.hash {
            return Err(Error::Artifact(format!(
                "upstream {} changed since {} was built",
                up.path.display(),
                artifact.display()
            )));
        }
        if manifest_path(&up.path).is_file() {
            verify_into(&up.path, seen)?;
        }
    }
    Ok(())
}
