//! Synthetic imbalanced segmentation data, NPY array files and dataset
//! manifests.

mod manifest;
pub mod npy;
mod patches;
mod synth;

pub use manifest::{subsample_training, subset_indices, DatasetManifest, ManifestRecord, Split};
pub use patches::{sample_patches, Patch, PatchSampler};
pub use synth::{generate, TaskSpec};

use crate::autodiff::{Real, Tensor};
use crate::error::{Error, Result};
use crate::field::LabelField;
use crate::numeric::Rarity;

/// A single-image example: `(H, W, C)` intensities and `(H, W)` class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub image: Vec<f32>,
    pub labels: Vec<u8>,
}

impl Sample {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        image: Vec<f32>,
        labels: Vec<u8>,
    ) -> Result<Self> {
        if image.len() != height * width * channels {
            return Err(Error::shape(
                format!("{height}x{width}x{channels} image"),
                image.len(),
            ));
        }
        if labels.len() != height * width {
            return Err(Error::shape(format!("{height}x{width} labels"), labels.len()));
        }
        Ok(Self {
            height,
            width,
            channels,
            image,
            labels,
        })
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// Pixels with a non-zero label.
    pub fn foreground_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }

    /// True if any pixel belongs to a class with positive rarity.
    pub fn has_rare(&self, rarity: &Rarity) -> bool {
        self.labels.iter().any(|&l| rarity.get(l as usize) > 0.0)
    }

    /// Mirrors columns of image and labels.
    pub fn flip_horizontal(&mut self) {
        let (w, c) = (self.width, self.channels);
        for y in 0..self.height {
            self.labels[y * w..(y + 1) * w].reverse();
            let row = &mut self.image[y * w * c..(y + 1) * w * c];
            for x in 0..w / 2 {
                for ch in 0..c {
                    row.swap(x * c + ch, (w - 1 - x) * c + ch);
                }
            }
        }
    }

    /// Window of `size`x`size` pixels with top-left corner `(y0, x0)`.
    pub fn crop(&self, y0: usize, x0: usize, size: usize) -> Result<Sample> {
        if y0 + size > self.height || x0 + size > self.width {
            return Err(Error::InvalidInput(format!(
                "crop {size}x{size} at ({y0}, {x0}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        let c = self.channels;
        let mut image = Vec::with_capacity(size * size * c);
        let mut labels = Vec::with_capacity(size * size);
        for y in y0..y0 + size {
            let row = (y * self.width + x0) * c;
            image.extend_from_slice(&self.image[row..row + size * c]);
            labels.extend_from_slice(&self.labels[y * self.width + x0..][..size]);
        }
        Sample::new(size, size, c, image, labels)
    }

    /// Image as a `[1, H, W, C]` tensor.
    pub fn tensor<T: Real>(&self) -> Tensor<T> {
        let data = self.image.iter().map(|&v| T::from_f64(v as f64)).collect();
        Tensor::new(vec![1, self.height, self.width, self.channels], data)
            .expect("sample dimensions checked at construction")
    }

    pub fn label_field(&self, classes: usize) -> Result<LabelField> {
        LabelField::from_u8(classes, &self.labels)
    }
}
