//! Checkpoint files: a JSON manifest plus a raw little-endian `f64` blob.
//!
//! `<stem>.json` lists every tensor with its shape and byte offset into
//! `<stem>.bin`, together with free-form seed provenance.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{NumericsError, Parameters, Tensor};

pub const CHECKPOINT_FORMAT: &str = "tascom-checkpoint/1";

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub len: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CheckpointManifest {
    pub format: String,
    pub blob: String,
    pub entries: Vec<ManifestEntry>,
    #[serde(default)]
    pub provenance: serde_json::Value,
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("json"), stem.with_extension("bin"))
}

pub fn save_checkpoint<P: Parameters>(
    stem: &Path,
    params: &P,
    provenance: serde_json::Value,
) -> Result<CheckpointManifest, NumericsError> {
    let (json_path, bin_path) = paths(stem);
    let mut blob = Vec::new();
    let mut entries = Vec::new();
    params.visit(&mut |name, t| {
        entries.push(ManifestEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset: blob.len() as u64,
            len: t.len() as u64,
        });
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    });
    let manifest = CheckpointManifest {
        format: CHECKPOINT_FORMAT.to_string(),
        blob: bin_path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        entries,
        provenance,
    };
    if let Some(dir) = json_path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(&bin_path, &blob)?;
    fs::write(&json_path, serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Read every tensor of a checkpoint, in manifest order.
pub fn read_checkpoint(stem: &Path) -> Result<(CheckpointManifest, Vec<(String, Tensor)>), NumericsError> {
    let (json_path, _) = paths(stem);
    let manifest: CheckpointManifest = serde_json::from_slice(&fs::read(&json_path)?)?;
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(NumericsError::Checkpoint(format!(
            "unsupported format {:?}",
            manifest.format
        )));
    }
    let bin_path = json_path.with_file_name(&manifest.blob);
    let blob = fs::read(&bin_path)?;
    let mut out = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let start = e.offset as usize;
        let end = start + 8 * e.len as usize;
        if end > blob.len() {
            return Err(NumericsError::Checkpoint(format!("{} runs past end of blob", e.name)));
        }
        let data = blob[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        out.push((e.name.clone(), Tensor::new(&e.shape, data)?));
    }
    Ok((manifest, out))
}

/// Load a checkpoint into an existing parameter set, checking names and shapes.
///
/// Entries are matched by name; the checkpoint may hold extra tensors (for
/// example a combined codec + discriminator file) under a `prefix`.
pub fn load_checkpoint_into<P: Parameters>(
    stem: &Path,
    prefix: &str,
    params: &mut P,
) -> Result<CheckpointManifest, NumericsError> {
    let (manifest, tensors) = read_checkpoint(stem)?;
    let mut err = None;
    params.visit_mut(&mut |name, t| {
        if err.is_some() {
            return;
        }
        let full = if prefix.is_empty() {
            name.to_string()
        } else {
            format!("{prefix}.{name}")
        };
        match tensors.iter().find(|(n, _)| *n == full) {
            Some((_, src)) if src.same_shape(t) => *t = src.clone(),
            Some((_, src)) => {
                err = Some(NumericsError::ShapeMismatch {
                    expected: t.shape().to_vec(),
                    found: src.shape().to_vec(),
                })
            }
            None => err = Some(NumericsError::Checkpoint(format!("missing tensor {full}"))),
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}
