//! Stable softmax algebra shared by every loss.
//!
//! All kernels subtract the running maximum before exponentiating, which
//! keeps softmax exactly invariant to a common shift of the logits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-class rarity weights `r_j ∈ [0, 1]`; `1` marks an under-represented
/// class. Binary in the usual setting, continuous values blend linearly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Rarity(Vec<f64>);

impl Rarity {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("rarity vector is empty".into()));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain {
                value: *v,
                domain: "rarity entries in [0, 1]",
            });
        }
        Ok(Self(values))
    }

    /// Marks the listed class indices as rare.
    pub fn indicator(classes: usize, rare: &[usize]) -> Self {
        let mut v = vec![0.0; classes];
        for &j in rare {
            v[j] = 1.0;
        }
        Self(v)
    }

    pub fn ones(classes: usize) -> Self {
        Self(vec![1.0; classes])
    }

    pub fn zeros(classes: usize) -> Self {
        Self(vec![0.0; classes])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, j: usize) -> f64 {
        self.0[j]
    }

    /// `y · r` for a (possibly soft) target vector.
    pub fn dot(&self, y: &[f64]) -> f64 {
        y.iter().zip(&self.0).map(|(a, b)| a * b).sum()
    }

    /// Classes with `r_j > 0.5`, used to define the evaluated foreground.
    pub fn rare_classes(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&j| self.0[j] > 0.5).collect()
    }
}

impl TryFrom<Vec<f64>> for Rarity {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Rarity::new(v)
    }
}

impl From<Rarity> for Vec<f64> {
    fn from(r: Rarity) -> Self {
        r.0
    }
}

fn check_finite(z: &[f64]) -> Result<()> {
    if z.is_empty() {
        return Err(Error::InvalidInput("empty logit vector".into()));
    }
    if let Some(v) = z.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite logit {v}")));
    }
    Ok(())
}

/// `log Σ exp(z_j)` with max subtraction.
pub fn log_sum_exp(z: &[f64]) -> Result<f64> {
    check_finite(z)?;
    Ok(lse_unchecked(z))
}

pub(crate) fn lse_unchecked(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = z.iter().map(|&v| (v - max).exp()).sum();
    max + s.ln()
}

pub fn softmax(z: &[f64]) -> Result<Vec<f64>> {
    check_finite(z)?;
    let mut out = vec![0.0; z.len()];
    softmax_into(z, &mut out);
    Ok(out)
}

/// Margin offsets `y_j · m` (symmetric) or `y_j · r_j · m` (asymmetric)
/// subtracted from the logits before the softmax.
pub fn margin_offsets(y: &[f64], margin: f64, rarity: &Rarity, asymmetric: bool) -> Vec<f64> {
    y.iter()
        .enumerate()
        .map(|(j, &yj)| {
            if asymmetric {
                yj * rarity.get(j) * margin
            } else {
                yj * margin
            }
        })
        .collect()
}

/// Softmax of `z - offset`, where the offset puts a margin on the target
/// class logit.
pub fn shifted_softmax(
    z: &[f64],
    y: &[f64],
    margin: f64,
    rarity: &Rarity,
    asymmetric: bool,
) -> Result<Vec<f64>> {
    check_finite(z)?;
    if y.len() != z.len() || rarity.len() != z.len() {
        return Err(Error::shape(
            format!("{} classes", z.len()),
            format!("target {} / rarity {}", y.len(), rarity.len()),
        ));
    }
    if !(margin >= 0.0) {
        return Err(Error::Domain {
            value: margin,
            domain: "margin >= 0",
        });
    }
    let shifted = shift_logits(z, &margin_offsets(y, margin, rarity, asymmetric));
    let mut out = vec![0.0; z.len()];
    softmax_into(&shifted, &mut out);
    Ok(out)
}

pub(crate) fn shift_logits(z: &[f64], offsets: &[f64]) -> Vec<f64> {
    z.iter().zip(offsets).map(|(a, b)| a - b).collect()
}

pub(crate) fn softmax_into(z: &[f64], out: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (v - max).exp();
        s += *o;
    }
    let inv = 1.0 / s;
    for o in out.iter_mut() {
        *o *= inv;
    }
}

/// Log-probabilities `z_j - lse(z)`.
pub(crate) fn log_softmax_into(z: &[f64], out: &mut [f64]) {
    let lse = lse_unchecked(z);
    for (o, &v) in out.iter_mut().zip(z) {
        *o = v - lse;
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for j in 1..z.len() {
        if z[j] > z[best] {
            best = j;
        }
    }
    best
}
