//! Per-pixel logit, probability, and label containers.
//!
//! All fields are pixel-major with the class index innermost, so pixel `i`
//! occupies `values[i * classes..(i + 1) * classes]`.

use crate::error::{Error, Result};
use crate::numeric;

/// Pre-softmax class activations for every pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitField {
    classes: usize,
    values: Vec<f64>,
}

/// Probabilities (each pixel sums to one) or any per-pixel class field
/// sharing the logit layout, e.g. a gradient.
pub type ProbabilityField = LogitField;

/// Gradient of a scalar loss with respect to a [`LogitField`].
pub type LogitGradField = LogitField;

impl LogitField {
    pub fn new(classes: usize, values: Vec<f64>) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 classes, got {classes}"
            )));
        }
        if values.len() % classes != 0 {
            return Err(Error::shape(
                format!("multiple of {classes} values"),
                values.len(),
            ));
        }
        Ok(Self { classes, values })
    }

    pub fn zeros(classes: usize, pixels: usize) -> Self {
        Self {
            classes,
            values: vec![0.0; classes * pixels],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn pixels(&self) -> usize {
        self.values.len() / self.classes
    }

    pub fn pixel(&self, i: usize) -> &[f64] {
        &self.values[i * self.classes..(i + 1) * self.classes]
    }

    pub fn pixel_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.classes..(i + 1) * self.classes]
    }

    pub fn iter_pixels(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.classes)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn ensure_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::InvalidInput(format!(
                "non-finite logit at pixel {} class {}",
                i / self.classes,
                i % self.classes
            ))),
            None => Ok(()),
        }
    }

    /// Pixel-wise softmax.
    pub fn softmax(&self) -> Result<ProbabilityField> {
        self.ensure_finite()?;
        let mut out = Self::zeros(self.classes, self.pixels());
        for (z, p) in self
            .values
            .chunks_exact(self.classes)
            .zip(out.values.chunks_exact_mut(self.classes))
        {
            numeric::softmax_into(z, p);
        }
        Ok(out)
    }

    pub fn scale(&mut self, a: f64) {
        self.values.iter_mut().for_each(|v| *v *= a);
    }

    pub fn add_assign(&mut self, other: &LogitField) -> Result<()> {
        if other.classes != self.classes || other.values.len() != self.values.len() {
            return Err(Error::shape(self.describe(), other.describe()));
        }
        self.values
            .iter_mut()
            .zip(&other.values)
            .for_each(|(a, b)| *a += b);
        Ok(())
    }

    /// Predicted class per pixel (lowest index on ties).
    pub fn argmax(&self) -> Vec<usize> {
        self.iter_pixels().map(numeric::argmax).collect()
    }

    fn describe(&self) -> String {
        format!("{} pixels x {} classes", self.pixels(), self.classes)
    }
}

/// Per-pixel target vectors. Usually one-hot; mixup produces soft rows and
/// skipped pixels carry an all-zero row, which every loss ignores.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelField {
    classes: usize,
    targets: Vec<f64>,
}

impl LabelField {
    pub fn from_classes(classes: usize, labels: &[usize]) -> Result<Self> {
        let mut targets = vec![0.0; classes * labels.len()];
        for (i, &c) in labels.iter().enumerate() {
            if c >= classes {
                return Err(Error::InvalidInput(format!(
                    "label {c} at pixel {i} exceeds class count {classes}"
                )));
            }
            targets[i * classes + c] = 1.0;
        }
        Ok(Self { classes, targets })
    }

    pub fn from_u8(classes: usize, labels: &[u8]) -> Result<Self> {
        let idx: Vec<usize> = labels.iter().map(|&v| v as usize).collect();
        Self::from_classes(classes, &idx)
    }

    /// Soft targets; rows must be non-negative and sum to one or zero.
    pub fn from_soft(classes: usize, targets: Vec<f64>) -> Result<Self> {
        if classes < 2 || targets.len() % classes != 0 {
            return Err(Error::shape(
                format!("multiple of {classes} values"),
                targets.len(),
            ));
        }
        for (i, row) in targets.chunks_exact(classes).enumerate() {
            let s: f64 = row.iter().sum();
            if row.iter().any(|v| !(*v >= 0.0)) || !(s.abs() < 1e-9 || (s - 1.0).abs() < 1e-9) {
                return Err(Error::InvalidInput(format!(
                    "target row {i} is not a distribution or zero: {row:?}"
                )));
            }
        }
        Ok(Self { classes, targets })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn pixels(&self) -> usize {
        self.targets.len() / self.classes
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.classes..(i + 1) * self.classes]
    }

    pub fn iter_targets(&self) -> std::slice::ChunksExact<'_, f64> {
        self.targets.chunks_exact(self.classes)
    }

    /// Pixels with a non-zero target take part in the loss.
    pub fn is_active(&self, i: usize) -> bool {
        self.target(i).iter().any(|&v| v != 0.0)
    }

    pub fn active_count(&self) -> usize {
        (0..self.pixels()).filter(|&i| self.is_active(i)).count()
    }

    /// Hard class of pixel `i`, if its target is one-hot.
    pub fn hard_class(&self, i: usize) -> Option<usize> {
        let t = self.target(i);
        let j = numeric::argmax(t);
        (t[j] == 1.0).then_some(j)
    }

    /// Element-wise product `y ⊙ r`, zeroing pixels whose target has no
    /// rare-class mass.
    pub fn masked_by(&self, rarity: &numeric::Rarity) -> Self {
        let mut targets = self.targets.clone();
        for row in targets.chunks_exact_mut(self.classes) {
            for (j, v) in row.iter_mut().enumerate() {
                *v *= rarity.get(j);
            }
        }
        Self {
            classes: self.classes,
            targets,
        }
    }

    pub fn concat(parts: &[&LabelField]) -> Result<Self> {
        let classes = parts.first().map_or(2, |p| p.classes);
        let mut targets = Vec::new();
        for p in parts {
            if p.classes != classes {
                return Err(Error::shape(format!("{classes} classes"), p.classes));
            }
            targets.extend_from_slice(&p.targets);
        }
        Ok(Self { classes, targets })
    }

    pub(crate) fn check_against(&self, z: &LogitField) -> Result<()> {
        if self.classes != z.classes() || self.pixels() != z.pixels() {
            return Err(Error::shape(
                format!("{} pixels x {} classes", z.pixels(), z.classes()),
                format!("{} pixels x {} classes", self.pixels(), self.classes),
            ));
        }
        Ok(())
    }
}
