//! Cross-entropy family: plain, large-margin, focal and their asymmetric
//! and combined variants.
//!
//! Every member has the per-pixel form
//!
//! ```text
//! L_i = Σ_j y_ij · a_j(q_ij) · (-log q_ij),   a_j(q) = k_j + (1 - k_j)(1 - q)^γ
//! ```
//!
//! where `q` is the softmax of the logits after subtracting the margin
//! offsets and `k_j` is how much of class `j` escapes focal attenuation
//! (`1` for plain CE, `0` for symmetric focal, `r_j` for asymmetric focal).
//! Because the offsets do not depend on `z`, the logit gradient is
//! `-y_k W_k + q_k Σ_j y_j W_j` with `W_j = k_j + (1 - k_j) w_focal(q_j)`.

use crate::error::Result;
use crate::field::{LabelField, LogitField, LogitGradField};
use crate::numeric::{self, Rarity};

use super::LossValue;

#[derive(Clone, Copy, Debug)]
pub(crate) enum Margin<'a> {
    None,
    Symmetric(f64),
    Asymmetric(f64, &'a Rarity),
}

impl Margin<'_> {
    fn offset(&self, j: usize, yj: f64) -> f64 {
        match *self {
            Margin::None => 0.0,
            Margin::Symmetric(m) => yj * m,
            Margin::Asymmetric(m, r) => yj * r.get(j) * m,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum Attenuation<'a> {
    None,
    Symmetric(f64),
    Asymmetric(f64, &'a Rarity),
}

impl Attenuation<'_> {
    /// Fraction of class `j` that escapes attenuation, and γ.
    pub(crate) fn split(&self, j: usize) -> (f64, f64) {
        match *self {
            Attenuation::None => (1.0, 0.0),
            Attenuation::Symmetric(g) => (0.0, g),
            Attenuation::Asymmetric(g, r) => (r.get(j), g),
        }
    }
}

/// Re-weighting factor of the focal gradient relative to the CE gradient,
/// `(1-p)^γ - γ p log(p) (1-p)^(γ-1)`.
pub fn focal_weight(p_true: f64, gamma: f64) -> Result<f64> {
    if !(p_true > 0.0 && p_true < 1.0) {
        return Err(crate::Error::Domain {
            value: p_true,
            domain: "p_true in (0, 1)",
        });
    }
    Ok(focal_weight_parts(p_true, 1.0 - p_true, p_true.ln(), gamma))
}

/// Same as [`focal_weight`] but with `1 - p` and `log p` supplied, so
/// callers can pass values that are accurate near `p = 1`.
pub(crate) fn focal_weight_parts(p: f64, one_minus_p: f64, log_p: f64, gamma: f64) -> f64 {
    if gamma == 0.0 {
        return 1.0;
    }
    let head = one_minus_p.powf(gamma);
    let tail = if one_minus_p > 0.0 {
        gamma * p * log_p * one_minus_p.powf(gamma - 1.0)
    } else {
        0.0
    };
    head - tail
}

/// Ratio `Σ e^{z_j} / Σ e^{z_j - y_j m}` by which a margin scales the CE
/// gradient of one pixel.
pub fn margin_weight(z: &[f64], y: &[f64], margin: f64) -> Result<f64> {
    let lse = numeric::log_sum_exp(z)?;
    let shifted: Vec<f64> = z.iter().zip(y).map(|(a, b)| a - b * margin).collect();
    Ok((lse - numeric::log_sum_exp(&shifted)?).exp())
}

pub(crate) fn ce_family(
    z: &LogitField,
    y: &LabelField,
    margin: Margin<'_>,
    attenuation: Attenuation<'_>,
) -> Result<(LossValue, LogitGradField)> {
    y.check_against(z)?;
    z.ensure_finite()?;
    let c = z.classes();
    let n_active = y.active_count();
    let mut per_class = vec![0.0; c];
    let mut grad = LogitField::zeros(c, z.pixels());
    if n_active == 0 {
        return Ok((LossValue::from_per_class(per_class), grad));
    }
    let inv_n = 1.0 / n_active as f64;

    let mut shifted = vec![0.0; c];
    let mut q = vec![0.0; c];
    let mut log_q = vec![0.0; c];
    let mut weights = vec![0.0; c];
    let mut rest = vec![0.0; c];
    for i in 0..z.pixels() {
        let t = y.target(i);
        if t.iter().all(|&v| v == 0.0) {
            continue;
        }
        let zi = z.pixel(i);
        for j in 0..c {
            shifted[j] = zi[j] - margin.offset(j, t[j]);
        }
        numeric::softmax_into(&shifted, &mut q);
        numeric::log_softmax_into(&shifted, &mut log_q);

        for j in 0..c {
            // 1 - q_j as the sum of the competitors; exact near q_j = 1
            rest[j] = (0..c).filter(|&k| k != j).map(|k| q[k]).sum();
            weights[j] = 0.0;
            if t[j] == 0.0 {
                continue;
            }
            let (keep, gamma) = attenuation.split(j);
            let atten = if gamma == 0.0 { 1.0 } else { rest[j].powf(gamma) };
            let a = keep + (1.0 - keep) * atten;
            per_class[j] += -t[j] * a * log_q[j] * inv_n;
            weights[j] = keep + (1.0 - keep) * focal_weight_parts(q[j], rest[j], log_q[j], gamma);
        }
        // q_k Σ_j y_j W_j - y_k W_k, regrouped so nothing cancels
        let g = grad.pixel_mut(i);
        for k in 0..c {
            let others: f64 = (0..c).filter(|&j| j != k).map(|j| t[j] * weights[j]).sum();
            g[k] = (q[k] * others - t[k] * weights[k] * rest[k]) * inv_n;
        }
    }
    Ok((LossValue::from_per_class(per_class), grad))
}

/// Mean per-pixel cross-entropy; gradient `(p - y) / N`.
pub fn ce_loss(z: &LogitField, y: &LabelField) -> Result<(LossValue, LogitGradField)> {
    ce_family(z, y, Margin::None, Attenuation::None)
}

/// CE on the margin-shifted softmax; gradient `(q - y) / N`.
pub fn margin_ce_loss(
    z: &LogitField,
    y: &LabelField,
    margin: f64,
    rarity: &Rarity,
    asymmetric: bool,
) -> Result<(LossValue, LogitGradField)> {
    super::check_nonneg(margin, "margin >= 0")?;
    super::check_rarity(rarity, z.classes())?;
    let m = if asymmetric {
        Margin::Asymmetric(margin, rarity)
    } else {
        Margin::Symmetric(margin)
    };
    ce_family(z, y, m, Attenuation::None)
}

/// Focal CE. The asymmetric form leaves rare classes unattenuated and
/// blends linearly for fractional rarity.
pub fn focal_ce_loss(
    z: &LogitField,
    y: &LabelField,
    gamma: f64,
    rarity: &Rarity,
    asymmetric: bool,
) -> Result<(LossValue, LogitGradField)> {
    super::check_nonneg(gamma, "gamma >= 0")?;
    super::check_rarity(rarity, z.classes())?;
    let a = if asymmetric {
        Attenuation::Asymmetric(gamma, rarity)
    } else {
        Attenuation::Symmetric(gamma)
    };
    ce_family(z, y, Margin::None, a)
}

/// Asymmetric margin combined with asymmetric focal attenuation.
pub fn combined_loss(
    z: &LogitField,
    y: &LabelField,
    margin: f64,
    gamma: f64,
    rarity: &Rarity,
) -> Result<(LossValue, LogitGradField)> {
    super::check_nonneg(margin, "margin >= 0")?;
    super::check_nonneg(gamma, "gamma >= 0")?;
    super::check_rarity(rarity, z.classes())?;
    ce_family(
        z,
        y,
        Margin::Asymmetric(margin, rarity),
        Attenuation::Asymmetric(gamma, rarity),
    )
}
