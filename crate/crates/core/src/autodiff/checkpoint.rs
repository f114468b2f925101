//! Parameter checkpoints: a flat little-endian array (`.bin`) plus a JSON
//! manifest recording shapes, precision and seed.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::net::{Architecture, TinyNet};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub precision: String,
    pub seed: u64,
    pub architecture: Architecture,
    pub shapes: Vec<Vec<usize>>,
    pub param_count: usize,
    pub data_file: String,
}

// appended rather than swapped in: run ids like `ce__f0.1__s1` contain dots
fn paths(base: &Path) -> (PathBuf, PathBuf) {
    let with = |ext: &str| {
        let mut s = base.as_os_str().to_owned();
        s.push(ext);
        PathBuf::from(s)
    };
    (with(".json"), with(".bin"))
}

/// Writes `<base>.json` and `<base>.bin`.
pub fn save<T: Real>(net: &TinyNet<T>, seed: u64, base: &Path) -> Result<CheckpointManifest> {
    let (json, bin) = paths(base);
    let mut bytes = Vec::with_capacity(net.param_count() * T::BYTES);
    for p in net.params() {
        for &v in p.data() {
            v.write_le(&mut bytes);
        }
    }
    let manifest = CheckpointManifest {
        precision: T::NAME.to_string(),
        seed,
        architecture: net.architecture().clone(),
        shapes: net.params().iter().map(|p| p.shape().to_vec()).collect(),
        param_count: net.param_count(),
        data_file: bin
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
    fs::write(&json, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&json, e))?;
    Ok(manifest)
}

pub fn read_manifest(base: &Path) -> Result<CheckpointManifest> {
    let (json, _) = paths(base);
    let text = fs::read(&json).map_err(|e| Error::io(&json, e))?;
    Ok(serde_json::from_slice(&text)?)
}

/// Loads a checkpoint written with the same precision `T`.
pub fn load<T: Real>(base: &Path) -> Result<(TinyNet<T>, CheckpointManifest)> {
    let manifest = read_manifest(base)?;
    if manifest.precision != T::NAME {
        return Err(Error::InvalidInput(format!(
            "checkpoint precision {} does not match requested {}",
            manifest.precision,
            T::NAME
        )));
    }
    let bin = base
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&manifest.data_file);
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    if bytes.len() != manifest.param_count * T::BYTES {
        return Err(Error::Format {
            offset: bytes.len(),
            reason: format!(
                "expected {} bytes for {} parameters",
                manifest.param_count * T::BYTES,
                manifest.param_count
            ),
        });
    }
    let mut chunks = bytes.chunks_exact(T::BYTES).map(T::read_le);
    let params = manifest
        .shapes
        .iter()
        .map(|s| {
            let n: usize = s.iter().product();
            Tensor::new(s.clone(), chunks.by_ref().take(n).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let net = TinyNet::from_params(manifest.architecture.clone(), params)?;
    Ok((net, manifest))
}
