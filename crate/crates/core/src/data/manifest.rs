use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::npy::read_array;
use super::Sample;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::config("split", format!("expected train or test, got {s:?}"))),
        }
    }
}

/// One manifest line. Paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub image: String,
    pub label: String,
    pub split: Split,
    pub seed: u64,
    pub fg_pixels: usize,
    pub bg_pixels: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| {
                    Error::config(format!("{}:{}", path.display(), i + 1), e.to_string())
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            root: path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf(),
            records,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n").expect("in-memory write");
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }

    pub fn load(&self, record: &ManifestRecord) -> Result<Sample> {
        let image = read_array::<f32>(&self.root.join(&record.image))?;
        let labels = read_array::<u8>(&self.root.join(&record.label))?;
        let (h, w, c) = match image.shape[..] {
            [h, w, c] => (h, w, c),
            [h, w] => (h, w, 1),
            _ => return Err(Error::shape("(H, W, C) image", format!("{:?}", image.shape))),
        };
        if labels.shape != [h, w] {
            return Err(Error::shape(format!("({h}, {w}) labels"), format!("{:?}", labels.shape)));
        }
        Sample::new(h, w, c, image.data, labels.data)
    }

    pub fn load_split(&self, split: Split) -> Result<Vec<Sample>> {
        self.split(split).map(|r| self.load(r)).collect()
    }

    /// Re-reads every label file and checks the recorded pixel counts.
    pub fn verify(&self) -> Result<()> {
        for r in &self.records {
            let s = self.load(r)?;
            let fg = s.foreground_count();
            if fg != r.fg_pixels || s.pixels() - fg != r.bg_pixels {
                return Err(Error::InvalidInput(format!(
                    "{}: manifest says {}/{} fg/bg pixels, file has {}/{}",
                    r.label,
                    r.fg_pixels,
                    r.bg_pixels,
                    fg,
                    s.pixels() - fg
                )));
            }
        }
        Ok(())
    }
}

/// Indices of the `round(fraction · n)` (at least one) items kept from `n`.
///
/// The kept set is a prefix of a seeded permutation, so for a fixed seed a
/// smaller fraction always selects a subset of a larger one. Indices are
/// returned in increasing order.
pub fn subset_indices(n: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Domain {
            value: fraction,
            domain: "train fraction in (0, 1]",
        });
    }
    let keep = ((fraction * n as f64).round() as usize).max(1).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed::derive(seed, &[seed::tag::SUBSET])));
    let mut kept = order[..keep].to_vec();
    kept.sort_unstable();
    Ok(kept)
}

/// Subsamples the training split with [`subset_indices`]; the test split is
/// untouched.
pub fn subsample_training(
    manifest: &DatasetManifest,
    fraction: f64,
    seed: u64,
) -> Result<DatasetManifest> {
    let train: Vec<usize> = (0..manifest.records.len())
        .filter(|&i| manifest.records[i].split == Split::Train)
        .collect();
    let mut chosen = vec![false; manifest.records.len()];
    for k in subset_indices(train.len(), fraction, seed)? {
        chosen[train[k]] = true;
    }
    let records = manifest
        .records
        .iter()
        .enumerate()
        .filter(|(i, r)| r.split == Split::Test || chosen[*i])
        .map(|(_, r)| r.clone())
        .collect();
    Ok(DatasetManifest {
        root: manifest.root.clone(),
        records,
    })
}
