//! Adversarial samples, mixup and augmentation, each with a symmetric form
//! and a form that favors the rare classes.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::autodiff::{field_to_tensor, logits_to_field, Real, Tensor, TinyNet};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::field::LabelField;
use crate::losses::{self, LossConfig};
use crate::numeric::Rarity;

/// Input-gradient norms below this are treated as degenerate.
pub const MIN_GRADIENT_NORM: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdvConfig {
    /// Search radius for the perturbation direction.
    pub epsilon: f64,
    /// L2 norm of the applied perturbation.
    pub magnitude: f64,
    #[serde(default)]
    pub asymmetric: bool,
}

impl AdvConfig {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config(format!("{prefix}epsilon"), "must be > 0"));
        }
        if !(self.magnitude > 0.0 && self.magnitude.is_finite()) {
            return Err(Error::config(format!("{prefix}magnitude"), "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Adversarial<T> {
    Sample(Tensor<T>),
    /// Asymmetric mode and the image has no rare-class pixel.
    NoRareClass,
    /// The input gradient vanished, so there is no ascent direction.
    DegenerateGradient,
}

/// One normalized gradient-ascent step on the input.
///
/// The input gradient, clipped to the `epsilon` ball, is rescaled to norm
/// `magnitude`. In asymmetric mode the loss only sees the
/// targets `y ⊙ r`, so background pixels do not shape the perturbation.
pub fn adversarial_example<T: Real>(
    net: &TinyNet<T>,
    image: &Tensor<T>,
    labels: &LabelField,
    cfg: &AdvConfig,
    loss: &LossConfig,
) -> Result<Adversarial<T>> {
    let targets = if cfg.asymmetric {
        let masked = labels.masked_by(&loss.rarity);
        if masked.active_count() == 0 {
            return Ok(Adversarial::NoRareClass);
        }
        masked
    } else {
        labels.clone()
    };
    let rec = net.record(image)?;
    let z = logits_to_field(rec.output())?;
    let (_, dz) = losses::evaluate(loss, &z, &targets)?;
    let upstream = field_to_tensor::<T>(&dz, rec.output().shape())?;
    let g = rec.backward(upstream)?.input.to_f64();
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm >= MIN_GRADIENT_NORM) {
        return Ok(Adversarial::DegenerateGradient);
    }
    // Clipping to the epsilon ball keeps the direction, so only the
    // normalized gradient matters.
    let scale = cfg.magnitude / norm;
    let data: Vec<f64> = image
        .to_f64()
        .iter()
        .zip(&g)
        .map(|(x, gv)| x + scale * gv)
        .collect();
    Ok(Adversarial::Sample(Tensor::from_f64(image.shape().to_vec(), &data)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixupConfig {
    /// Both shape parameters of the Beta distribution of λ.
    pub alpha: f64,
    /// Minimum weight a rare-class pixel needs to keep its label.
    #[serde(default)]
    pub margin: f64,
    #[serde(default)]
    pub asymmetric: bool,
}

impl MixupConfig {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config(format!("{prefix}alpha"), "must be > 0"));
        }
        if !(0.0..1.0).contains(&self.margin) {
            return Err(Error::config(format!("{prefix}margin"), "must be in [0, 1)"));
        }
        Ok(())
    }

    pub fn draw_lambda<R: Rng>(&self, rng: &mut R) -> f64 {
        Beta::new(self.alpha, self.alpha)
            .expect("validated alpha")
            .sample(rng)
    }
}

/// `(λ x_i + (1-λ) x_k, λ y_i + (1-λ) y_k)`.
pub fn mixup_pair<T: Real>(
    x_i: &Tensor<T>,
    y_i: &LabelField,
    x_k: &Tensor<T>,
    y_k: &LabelField,
    lambda: f64,
) -> Result<(Tensor<T>, LabelField)> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Domain {
            value: lambda,
            domain: "mixup lambda in [0, 1]",
        });
    }
    if x_i.shape() != x_k.shape() {
        return Err(Error::shape(format!("{:?}", x_i.shape()), format!("{:?}", x_k.shape())));
    }
    if y_i.classes() != y_k.classes() || y_i.pixels() != y_k.pixels() {
        return Err(Error::shape(
            format!("{}x{} labels", y_i.pixels(), y_i.classes()),
            format!("{}x{}", y_k.pixels(), y_k.classes()),
        ));
    }
    let mix = |a: f64, b: f64| {
        if lambda == 1.0 {
            a
        } else if lambda == 0.0 {
            b
        } else {
            lambda * a + (1.0 - lambda) * b
        }
    };
    let x: Vec<f64> = x_i.to_f64().iter().zip(x_k.to_f64()).map(|(&a, b)| mix(a, b)).collect();
    let y = y_i
        .iter_targets()
        .zip(y_k.iter_targets())
        .flat_map(|(a, b)| a.iter().zip(b).map(|(&p, &q)| mix(p, q)).collect::<Vec<_>>())
        .collect();
    Ok((
        Tensor::from_f64(x_i.shape().to_vec(), &x)?,
        LabelField::from_soft(y_i.classes(), y)?,
    ))
}

/// Outcome of the hard-label mixing rule for one pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MixupChoice {
    First,
    Second,
    Skip,
}

/// Hard-label mixing: a rare-class label survives if its image weight
/// exceeds `m` and the other label is not rare; equal labels always survive;
/// anything else is skipped.
pub fn asym_mixup_label(
    y_i: &[f64],
    y_k: &[f64],
    lambda: f64,
    m: f64,
    rarity: &Rarity,
) -> MixupChoice {
    if y_i == y_k {
        return MixupChoice::First;
    }
    let (ri, rk) = (rarity.dot(y_i), rarity.dot(y_k));
    if lambda > m && ri * (1.0 - rk) == 1.0 {
        MixupChoice::First
    } else if 1.0 - lambda > m && rk * (1.0 - ri) == 1.0 {
        MixupChoice::Second
    } else {
        MixupChoice::Skip
    }
}

/// Per-pixel hard labels of an asymmetric mixup; skipped pixels get a zero
/// target and drop out of the loss.
pub fn asym_mixup_field(
    y_i: &LabelField,
    y_k: &LabelField,
    lambda: f64,
    m: f64,
    rarity: &Rarity,
) -> Result<LabelField> {
    if y_i.classes() != y_k.classes() || y_i.pixels() != y_k.pixels() {
        return Err(Error::shape(
            format!("{}x{} labels", y_i.pixels(), y_i.classes()),
            format!("{}x{}", y_k.pixels(), y_k.classes()),
        ));
    }
    let c = y_i.classes();
    let mut targets = vec![0.0; c * y_i.pixels()];
    for (i, (a, b)) in y_i.iter_targets().zip(y_k.iter_targets()).enumerate() {
        let row = &mut targets[i * c..(i + 1) * c];
        match asym_mixup_label(a, b, lambda, m, rarity) {
            MixupChoice::First => row.copy_from_slice(a),
            MixupChoice::Second => row.copy_from_slice(b),
            MixupChoice::Skip => {}
        }
    }
    LabelField::from_soft(c, targets)
}

fn default_shift() -> f64 {
    0.1
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugConfig {
    /// Probability for patches containing a rare-class pixel.
    pub p_fg: f64,
    /// Probability for background-only patches.
    pub p_bg: f64,
    #[serde(default = "default_true")]
    pub flip: bool,
    /// Additive intensity shifts are drawn from `[-s, s]`.
    #[serde(default = "default_shift")]
    pub intensity_shift: f64,
}

impl AugConfig {
    pub fn symmetric(p: f64) -> Self {
        Self {
            p_fg: p,
            p_bg: p,
            flip: true,
            intensity_shift: default_shift(),
        }
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        if !(0.0 <= self.p_bg && self.p_bg <= self.p_fg && self.p_fg <= 1.0) {
            return Err(Error::config(
                format!("{prefix}p_bg"),
                format!("need 0 <= p_bg <= p_fg <= 1, got p_bg={} p_fg={}", self.p_bg, self.p_fg),
            ));
        }
        if !(self.intensity_shift >= 0.0 && self.intensity_shift.is_finite()) {
            return Err(Error::config(format!("{prefix}intensity_shift"), "must be >= 0"));
        }
        Ok(())
    }
}

/// Transforms the patch in place with the probability for its kind; returns
/// whether it was transformed. Flips act on image and labels, intensity
/// shifts on the image only.
pub fn apply_augmentation<R: Rng>(
    patch: &mut Sample,
    cfg: &AugConfig,
    rarity: &Rarity,
    rng: &mut R,
) -> bool {
    let p = if patch.has_rare(rarity) { cfg.p_fg } else { cfg.p_bg };
    if !(rng.random::<f64>() < p) {
        return false;
    }
    if cfg.flip {
        patch.flip_horizontal();
    }
    if cfg.intensity_shift > 0.0 {
        let s = rng.random_range(-cfg.intensity_shift..=cfg.intensity_shift) as f32;
        for v in &mut patch.image {
            *v += s;
        }
    }
    true
}
