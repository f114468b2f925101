use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, ManifestRecord, Split};
use super::npy::write_array;
use super::Sample;
use crate::error::{Error, Result};
use crate::seed;

const MAX_ATTEMPTS: usize = 2000;

/// Parameters of the synthetic blob-segmentation task.
///
/// Intensities are Gaussian background noise; foreground disks are raised by
/// `intensity_offset` noise standard deviations and carry extra texture noise
/// (`texture_std`, also in noise-std units).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskSpec {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub noise_mean: f64,
    pub noise_std: f64,
    pub blob_count: [usize; 2],
    pub blob_radius: [f64; 2],
    pub intensity_offset: f64,
    pub texture_std: f64,
    /// Accepted per-image background/foreground pixel ratio band.
    pub target_ratio: [f64; 2],
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            channels: 1,
            noise_mean: 0.0,
            noise_std: 1.0,
            blob_count: [1, 1],
            blob_radius: [2.0, 4.0],
            intensity_offset: 1.5,
            texture_std: 0.5,
            target_ratio: [160.0, 240.0],
            n_train: 100,
            n_test: 50,
            seed: 0,
        }
    }
}

impl TaskSpec {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        let at = |f: &str| format!("{prefix}{f}");
        if self.height < 16 || self.width < 16 {
            return Err(Error::config(at("height"), "image must be at least 16x16"));
        }
        if self.channels == 0 {
            return Err(Error::config(at("channels"), "must be >= 1"));
        }
        if !(self.noise_std > 0.0) || !self.noise_mean.is_finite() {
            return Err(Error::config(at("noise_std"), "must be finite and > 0"));
        }
        if self.blob_count[0] > self.blob_count[1] {
            return Err(Error::config(at("blob_count"), "range must be [min, max]"));
        }
        let [rlo, rhi] = self.blob_radius;
        if !(rlo >= 1.0 && rlo <= rhi) {
            return Err(Error::config(at("blob_radius"), "need 1 <= min <= max"));
        }
        if 2.0 * rhi + 1.0 > self.height.min(self.width) as f64 {
            return Err(Error::config(at("blob_radius"), "largest blob does not fit in the image"));
        }
        if !(self.texture_std >= 0.0) || !self.intensity_offset.is_finite() {
            return Err(Error::config(at("texture_std"), "must be finite and >= 0"));
        }
        let [lo, hi] = self.target_ratio;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::config(at("target_ratio"), "need 0 < min <= max < inf"));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::config(at("n_train"), "n_train and n_test must be >= 1"));
        }
        Ok(())
    }

    /// Draws the label mask, resampling until its ratio lands in the band.
    fn draw_mask<R: Rng>(&self, rng: &mut R) -> Result<Vec<u8>> {
        let (h, w) = (self.height, self.width);
        for _ in 0..MAX_ATTEMPTS {
            let k = rng.random_range(self.blob_count[0]..=self.blob_count[1]);
            let mut mask = vec![0u8; h * w];
            for _ in 0..k {
                let r = rng.random_range(self.blob_radius[0]..=self.blob_radius[1]);
                let cy = rng.random_range(r..=(h as f64 - 1.0 - r));
                let cx = rng.random_range(r..=(w as f64 - 1.0 - r));
                for y in 0..h {
                    let dy = y as f64 - cy;
                    if dy.abs() > r {
                        continue;
                    }
                    for x in 0..w {
                        let dx = x as f64 - cx;
                        if dx * dx + dy * dy <= r * r {
                            mask[y * w + x] = 1;
                        }
                    }
                }
            }
            if k == 0 {
                return Ok(mask);
            }
            let fg = mask.iter().filter(|&&v| v != 0).count();
            let ratio = (h * w - fg) as f64 / fg as f64;
            if fg > 0 && ratio >= self.target_ratio[0] && ratio <= self.target_ratio[1] {
                return Ok(mask);
            }
        }
        Err(Error::config(
            "target_ratio",
            format!(
                "no {}x{} image with blob_count {:?} and blob_radius {:?} reached a bg/fg ratio in {:?}",
                h, w, self.blob_count, self.blob_radius, self.target_ratio
            ),
        ))
    }

    /// Generates the image with the given seed.
    pub fn sample(&self, image_seed: u64) -> Result<Sample> {
        let mut rng = seed::rng(image_seed);
        let labels = self.draw_mask(&mut rng)?;
        let noise = Normal::new(self.noise_mean, self.noise_std).expect("validated std");
        let texture = Normal::new(0.0, self.texture_std * self.noise_std).expect("validated std");
        let offset = self.intensity_offset * self.noise_std;
        let c = self.channels;
        let mut image = Vec::with_capacity(labels.len() * c);
        for &l in &labels {
            for _ in 0..c {
                let mut v = noise.sample(&mut rng);
                if l != 0 {
                    v += offset + texture.sample(&mut rng);
                }
                image.push(v as f32);
            }
        }
        Sample::new(self.height, self.width, c, image, labels)
    }

    /// Per-image seed, derived from the master seed and the image index.
    pub fn image_seed(&self, index: usize) -> u64 {
        seed::derive(self.seed, &[seed::tag::IMAGE, index as u64])
    }

    /// All images in manifest order (train first), without touching disk.
    pub fn samples(&self) -> Result<Vec<(Split, u64, Sample)>> {
        self.validate("")?;
        (0..self.n_train + self.n_test)
            .map(|i| {
                let split = if i < self.n_train { Split::Train } else { Split::Test };
                let s = self.image_seed(i);
                Ok((split, s, self.sample(s)?))
            })
            .collect()
    }
}

/// Writes images, labels and `manifest.jsonl` under `out_dir`.
pub fn generate(spec: &TaskSpec, out_dir: &Path) -> Result<DatasetManifest> {
    let samples = spec.samples()?;
    for sub in ["images", "labels"] {
        let d = out_dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut records = Vec::with_capacity(samples.len());
    let mut index = [0usize; 2];
    for (split, image_seed, s) in samples {
        let k = &mut index[(split == Split::Test) as usize];
        let name = format!("{split}_{:04}.npy", *k);
        *k += 1;
        let image = format!("images/{name}");
        let label = format!("labels/{name}");
        write_array(&out_dir.join(&image), &[s.height, s.width, s.channels], &s.image)?;
        write_array(&out_dir.join(&label), &[s.height, s.width], &s.labels)?;
        let fg = s.foreground_count();
        records.push(ManifestRecord {
            image,
            label,
            split,
            seed: image_seed,
            fg_pixels: fg,
            bg_pixels: s.pixels() - fg,
        });
    }
    let manifest = DatasetManifest {
        root: out_dir.to_path_buf(),
        records,
    };
    manifest.write(&out_dir.join("manifest.jsonl"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TaskSpec {
        TaskSpec {
            n_train: 4,
            n_test: 2,
            ..TaskSpec::default()
        }
    }

    #[test]
    fn every_image_lands_in_band() {
        for (_, _, s) in small().samples().unwrap() {
            let fg = s.foreground_count();
            let ratio = (s.pixels() - fg) as f64 / fg as f64;
            assert!((160.0..=240.0).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn zero_blobs_give_background_only() {
        let spec = TaskSpec {
            blob_count: [0, 0],
            ..small()
        };
        assert!(spec.samples().unwrap().iter().all(|(_, _, s)| s.foreground_count() == 0));
    }

    #[test]
    fn unreachable_band_is_config_error() {
        let spec = TaskSpec {
            blob_radius: [1.0, 1.5],
            target_ratio: [5.0, 6.0],
            ..small()
        };
        let err = spec.samples().unwrap_err();
        assert!(err.is_config());
        assert!(err.to_string().contains("target_ratio"));
        let bad = TaskSpec {
            height: 8,
            ..small()
        };
        assert!(bad.validate("task.").unwrap_err().to_string().contains("task.height"));
    }
}
