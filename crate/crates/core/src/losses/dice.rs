//! Soft Dice family and the soft F-beta loss.
//!
//! Soft counts are aggregated over all active pixels of a field, per class:
//! `TP = Σ y p`, `FP = Σ (1-y) p`, `FN = Σ y (1-p)`. The denominator
//! `2TP + FP + FN + ε` simplifies to `Σ (p + y) + ε`.

use crate::error::Result;
use crate::field::{LabelField, LogitField, ProbabilityField};
use crate::numeric::Rarity;

use super::cross_entropy::{Attenuation, Margin};
use super::LossValue;

pub const DEFAULT_EPSILON: f64 = 1e-5;

fn check_probs(p: &ProbabilityField) -> Result<()> {
    if let Some(v) = p.values().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(crate::Error::Domain {
            value: *v,
            domain: "probabilities in [0, 1]",
        });
    }
    Ok(())
}

/// Dice with focal attenuation on the false-negative part of the numerator:
/// `(FP + Σ y (1-p) a(p)) / (2TP + FP + FN + ε)`.
pub(crate) fn dice_family(
    p: &ProbabilityField,
    y: &LabelField,
    attenuation: Attenuation<'_>,
    epsilon: f64,
) -> Result<(LossValue, ProbabilityField)> {
    y.check_against(p)?;
    check_probs(p)?;
    super::check_nonneg(epsilon, "dsc epsilon >= 0")?;
    let c = p.classes();
    let mut numer = vec![0.0; c];
    let mut denom = vec![epsilon; c];
    for i in 0..p.pixels() {
        if !y.is_active(i) {
            continue;
        }
        let (pi, t) = (p.pixel(i), y.target(i));
        for j in 0..c {
            let (keep, gamma) = attenuation.split(j);
            let rest = 1.0 - pi[j];
            let atten = keep + (1.0 - keep) * if gamma == 0.0 { 1.0 } else { rest.powf(gamma) };
            numer[j] += (1.0 - t[j]) * pi[j] + t[j] * rest * atten;
            denom[j] += pi[j] + t[j];
        }
    }
    let per_class: Vec<f64> = numer
        .iter()
        .zip(&denom)
        .map(|(n, d)| if *n == 0.0 { 0.0 } else { n / d })
        .collect();

    let mut grad = LogitField::zeros(c, p.pixels());
    for i in 0..p.pixels() {
        if !y.is_active(i) {
            continue;
        }
        let (pi, t) = (p.pixel(i), y.target(i));
        let g = grad.pixel_mut(i);
        for j in 0..c {
            if denom[j] == 0.0 {
                continue;
            }
            let (keep, gamma) = attenuation.split(j);
            let rest = 1.0 - pi[j];
            // d/dp [(1-p) a(p)] = -k - (1-k)(γ+1)(1-p)^γ
            let d_fn = -keep
                - (1.0 - keep) * (gamma + 1.0) * if gamma == 0.0 { 1.0 } else { rest.powf(gamma) };
            let d_numer = (1.0 - t[j]) + t[j] * d_fn;
            g[j] = (d_numer * denom[j] - numer[j]) / (denom[j] * denom[j]);
        }
    }
    Ok((LossValue::from_per_class(per_class), grad))
}

/// Soft Dice loss; the gradient is with respect to `p`.
pub fn dsc_loss(
    p: &ProbabilityField,
    y: &LabelField,
    epsilon: f64,
) -> Result<(LossValue, ProbabilityField)> {
    dice_family(p, y, Attenuation::None, epsilon)
}

/// Focal Dice. Symmetric scales each false-negative term by `(1-p)^γ`,
/// asymmetric by `r + (1-r)(1-p)^γ`.
pub fn focal_dsc_loss(
    p: &ProbabilityField,
    y: &LabelField,
    gamma: f64,
    rarity: &Rarity,
    asymmetric: bool,
    epsilon: f64,
) -> Result<(LossValue, ProbabilityField)> {
    super::check_nonneg(gamma, "gamma >= 0")?;
    super::check_rarity(rarity, p.classes())?;
    let a = if asymmetric {
        Attenuation::Asymmetric(gamma, rarity)
    } else {
        Attenuation::Symmetric(gamma)
    };
    dice_family(p, y, a, epsilon)
}

/// Soft F-beta loss per class, `(β² FN + FP) / ((1+β²) TP + β² FN + FP + ε)`,
/// summed over classes. At `β = 1` it is the Dice loss.
pub fn fbeta_loss(
    p: &ProbabilityField,
    y: &LabelField,
    beta: f64,
    epsilon: f64,
) -> Result<(LossValue, ProbabilityField)> {
    y.check_against(p)?;
    check_probs(p)?;
    if !(beta > 0.0) {
        return Err(crate::Error::Domain {
            value: beta,
            domain: "beta > 0",
        });
    }
    let b2 = beta * beta;
    let c = p.classes();
    let mut numer = vec![0.0; c];
    let mut denom = vec![epsilon; c];
    for i in 0..p.pixels() {
        if !y.is_active(i) {
            continue;
        }
        let (pi, t) = (p.pixel(i), y.target(i));
        for j in 0..c {
            let tp = t[j] * pi[j];
            let fp = (1.0 - t[j]) * pi[j];
            let fneg = t[j] * (1.0 - pi[j]);
            numer[j] += b2 * fneg + fp;
            denom[j] += (1.0 + b2) * tp + b2 * fneg + fp;
        }
    }
    let per_class: Vec<f64> = numer
        .iter()
        .zip(&denom)
        .map(|(n, d)| if *n == 0.0 { 0.0 } else { n / d })
        .collect();
    let mut grad = LogitField::zeros(c, p.pixels());
    for i in 0..p.pixels() {
        if !y.is_active(i) {
            continue;
        }
        let t = y.target(i);
        let g = grad.pixel_mut(i);
        for j in 0..c {
            if denom[j] == 0.0 {
                continue;
            }
            // d denom / dp = 1
            let d_numer = -b2 * t[j] + (1.0 - t[j]);
            g[j] = (d_numer * denom[j] - numer[j]) / (denom[j] * denom[j]);
        }
    }
    Ok((LossValue::from_per_class(per_class), grad))
}

/// Chains a probability-space gradient through the softmax Jacobian:
/// `dz_k = p_k (dp_k - Σ_j dp_j p_j)`.
pub(crate) fn chain_softmax(p: &ProbabilityField, dp: &ProbabilityField) -> LogitField {
    let c = p.classes();
    let mut out = LogitField::zeros(c, p.pixels());
    for i in 0..p.pixels() {
        let (pi, gi) = (p.pixel(i), dp.pixel(i));
        let dot: f64 = pi.iter().zip(gi).map(|(a, b)| a * b).sum();
        let o = out.pixel_mut(i);
        for k in 0..c {
            o[k] = pi[k] * (gi[k] - dot);
        }
    }
    out
}

/// Softmax of the margin-shifted logits, pixel by pixel.
pub(crate) fn shifted_probabilities(
    z: &LogitField,
    y: &LabelField,
    margin: Margin<'_>,
) -> Result<ProbabilityField> {
    y.check_against(z)?;
    z.ensure_finite()?;
    let c = z.classes();
    let mut q = LogitField::zeros(c, z.pixels());
    let mut shifted = vec![0.0; c];
    for i in 0..z.pixels() {
        let (zi, t) = (z.pixel(i), y.target(i));
        for j in 0..c {
            shifted[j] = zi[j]
                - match margin {
                    Margin::None => 0.0,
                    Margin::Symmetric(m) => t[j] * m,
                    Margin::Asymmetric(m, r) => t[j] * r.get(j) * m,
                };
        }
        crate::numeric::softmax_into(&shifted, q.pixel_mut(i));
    }
    Ok(q)
}

pub(crate) fn dice_on_logits(
    z: &LogitField,
    y: &LabelField,
    margin: Margin<'_>,
    attenuation: Attenuation<'_>,
    epsilon: f64,
) -> Result<(LossValue, LogitField)> {
    let q = shifted_probabilities(z, y, margin)?;
    let (value, dq) = dice_family(&q, y, attenuation, epsilon)?;
    Ok((value, chain_softmax(&q, &dq)))
}

/// Dice on the margin-shifted softmax; gradient with respect to `z`.
pub fn margin_dsc_loss(
    z: &LogitField,
    y: &LabelField,
    margin: f64,
    rarity: &Rarity,
    asymmetric: bool,
    epsilon: f64,
) -> Result<(LossValue, LogitField)> {
    super::check_nonneg(margin, "margin >= 0")?;
    super::check_rarity(rarity, z.classes())?;
    let m = if asymmetric {
        Margin::Asymmetric(margin, rarity)
    } else {
        Margin::Symmetric(margin)
    };
    dice_on_logits(z, y, m, Attenuation::None, epsilon)
}

/// Asymmetric focal Dice evaluated on the asymmetric margin softmax.
pub fn combined_dsc_loss(
    z: &LogitField,
    y: &LabelField,
    margin: f64,
    gamma: f64,
    rarity: &Rarity,
    epsilon: f64,
) -> Result<(LossValue, LogitField)> {
    super::check_nonneg(margin, "margin >= 0")?;
    super::check_nonneg(gamma, "gamma >= 0")?;
    super::check_rarity(rarity, z.classes())?;
    dice_on_logits(
        z,
        y,
        Margin::Asymmetric(margin, rarity),
        Attenuation::Asymmetric(gamma, rarity),
        epsilon,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn all_foreground(p_fg: f64, n: usize) -> (ProbabilityField, LabelField) {
        let p = LogitField::new(2, [1.0 - p_fg, p_fg].repeat(n)).unwrap();
        let y = LabelField::from_classes(2, &vec![1; n]).unwrap();
        (p, y)
    }

    #[test]
    fn hard_correct_prediction_is_zero() {
        let y = LabelField::from_classes(3, &[0, 1, 2, 2]).unwrap();
        let p = LogitField::new(3, y.iter_targets().flatten().copied().collect()).unwrap();
        let (l, _) = dsc_loss(&p, &y, DEFAULT_EPSILON).unwrap();
        assert_eq!(l.per_class, vec![0.0; 3]);
    }

    #[test]
    fn uniform_foreground_prediction() {
        let (p, y) = all_foreground(0.8, 10);
        let (l, _) = dsc_loss(&p, &y, 0.0).unwrap();
        assert_abs_diff_eq!(l.per_class[1], 0.2 / 1.8, epsilon = 1e-12);
        let (l, _) = dsc_loss(&p, &y, DEFAULT_EPSILON).unwrap();
        assert_abs_diff_eq!(l.per_class[1], 0.111111, epsilon = 1e-6);

        let r = Rarity::indicator(2, &[1]);
        let (l, _) = focal_dsc_loss(&p, &y, 2.0, &r, false, 0.0).unwrap();
        assert_abs_diff_eq!(l.per_class[1], 0.008 / 1.8, epsilon = 1e-12);
        assert_abs_diff_eq!(l.per_class[1], 0.0044444, epsilon = 1e-7);
    }

    #[test]
    fn absent_class_with_no_mass_is_zero() {
        let p = LogitField::new(2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let y = LabelField::from_classes(2, &[0, 0]).unwrap();
        let (l, _) = dsc_loss(&p, &y, DEFAULT_EPSILON).unwrap();
        assert_eq!(l.per_class[1], 0.0);
    }

    #[test]
    fn fbeta_examples() {
        // TP = 2, FP = 1, FN = 1 for class 1 with hard probabilities
        let p = LogitField::new(2, vec![0., 1., 0., 1., 0., 1., 1., 0.]).unwrap();
        let y = LabelField::from_classes(2, &[1, 1, 0, 1]).unwrap();
        let (l, _) = fbeta_loss(&p, &y, 2.0, 0.0).unwrap();
        assert_abs_diff_eq!(l.per_class[1], 1.0 / 3.0, epsilon = 1e-15);
        let (l, _) = fbeta_loss(&y_as_p(&y), &y, 4.0, DEFAULT_EPSILON).unwrap();
        assert_eq!(l.total, 0.0);
        assert!(fbeta_loss(&p, &y, 0.0, 0.0).is_err());
    }

    fn y_as_p(y: &LabelField) -> ProbabilityField {
        LogitField::new(y.classes(), y.iter_targets().flatten().copied().collect()).unwrap()
    }

    #[test]
    fn rejects_invalid_probabilities() {
        let p = LogitField::new(2, vec![1.2, -0.2]).unwrap();
        let y = LabelField::from_classes(2, &[0]).unwrap();
        assert!(dsc_loss(&p, &y, DEFAULT_EPSILON).is_err());
    }
}
