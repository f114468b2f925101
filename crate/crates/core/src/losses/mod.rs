//! Segmentation losses and their analytic logit gradients.

mod cross_entropy;
mod dice;

use serde::{Deserialize, Serialize};

pub use cross_entropy::{
    ce_loss, combined_loss, focal_ce_loss, focal_weight, margin_ce_loss, margin_weight,
};
pub use dice::{
    combined_dsc_loss, dsc_loss, fbeta_loss, focal_dsc_loss, margin_dsc_loss, DEFAULT_EPSILON,
};

use crate::error::{Error, Result};
use crate::field::{LabelField, LogitField, LogitGradField};
use crate::numeric::Rarity;
use cross_entropy::{Attenuation, Margin};

#[derive(Clone, Debug, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub per_class: Vec<f64>,
}

impl LossValue {
    fn from_per_class(per_class: Vec<f64>) -> Self {
        Self {
            total: per_class.iter().sum(),
            per_class,
        }
    }

    fn add(&mut self, other: &LossValue) {
        self.total += other.total;
        for (a, b) in self.per_class.iter_mut().zip(&other.per_class) {
            *a += b;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Ce,
    Dsc,
    MarginCe,
    MarginDsc,
    FocalCe,
    FocalDsc,
    CombinedCe,
    CombinedDsc,
    Fbeta,
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Ce => "ce",
            LossKind::Dsc => "dsc",
            LossKind::MarginCe => "margin_ce",
            LossKind::MarginDsc => "margin_dsc",
            LossKind::FocalCe => "focal_ce",
            LossKind::FocalDsc => "focal_dsc",
            LossKind::CombinedCe => "combined_ce",
            LossKind::CombinedDsc => "combined_dsc",
            LossKind::Fbeta => "fbeta",
        }
    }

    /// DSC-family counterpart of a CE-family kind.
    fn dice_counterpart(&self) -> Option<LossKind> {
        match self {
            LossKind::Ce => Some(LossKind::Dsc),
            LossKind::MarginCe => Some(LossKind::MarginDsc),
            LossKind::FocalCe => Some(LossKind::FocalDsc),
            LossKind::CombinedCe => Some(LossKind::CombinedDsc),
            _ => None,
        }
    }
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn default_beta() -> f64 {
    1.0
}

/// A fully specified training loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub kind: LossKind,
    #[serde(default)]
    pub asymmetric: bool,
    #[serde(default)]
    pub margin: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    pub rarity: Rarity,
    #[serde(default = "default_epsilon")]
    pub dsc_epsilon: f64,
    /// Adds the matching Dice-family term with equal weight (CE kinds only).
    #[serde(default)]
    pub add_dsc: bool,
}

impl LossConfig {
    pub fn new(kind: LossKind, rarity: Rarity) -> Self {
        Self {
            kind,
            asymmetric: false,
            margin: 0.0,
            gamma: 0.0,
            beta: 1.0,
            rarity,
            dsc_epsilon: DEFAULT_EPSILON,
            add_dsc: false,
        }
    }

    pub fn asymmetric(mut self, on: bool) -> Self {
        self.asymmetric = on;
        self
    }

    pub fn with_margin(mut self, m: f64) -> Self {
        self.margin = m;
        self
    }

    pub fn with_gamma(mut self, g: f64) -> Self {
        self.gamma = g;
        self
    }

    pub fn with_beta(mut self, b: f64) -> Self {
        self.beta = b;
        self
    }

    /// Checks parameter domains; `prefix` is used for error paths.
    pub fn validate(&self, prefix: &str) -> Result<()> {
        let path = |f: &str| format!("{prefix}.{f}");
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::config(path("margin"), "must be finite and >= 0"));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::config(path("gamma"), "must be finite and >= 0"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::config(path("beta"), "must be finite and > 0"));
        }
        if !(self.dsc_epsilon >= 0.0) {
            return Err(Error::config(path("dsc_epsilon"), "must be >= 0"));
        }
        if self.rarity.len() < 2 {
            return Err(Error::config(path("rarity"), "needs one entry per class (>= 2)"));
        }
        if self.add_dsc && self.kind.dice_counterpart().is_none() {
            return Err(Error::config(
                path("add_dsc"),
                format!("only valid for CE-family kinds, not {}", self.kind.name()),
            ));
        }
        Ok(())
    }

    /// Short label such as `asym-focal_ce` used in reports.
    pub fn label(&self) -> String {
        let prefix = if self.asymmetric && self.kind != LossKind::Ce && self.kind != LossKind::Dsc {
            "asym-"
        } else {
            ""
        };
        let suffix = if self.add_dsc { "+dsc" } else { "" };
        format!("{prefix}{}{suffix}", self.kind.name())
    }
}

fn check_nonneg(v: f64, domain: &'static str) -> Result<()> {
    if v >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain { value: v, domain })
    }
}

fn check_rarity(r: &Rarity, classes: usize) -> Result<()> {
    if r.len() == classes {
        Ok(())
    } else {
        Err(Error::shape(
            format!("rarity with {classes} entries"),
            r.len(),
        ))
    }
}

fn margin_of(cfg: &LossConfig) -> Margin<'_> {
    if cfg.asymmetric {
        Margin::Asymmetric(cfg.margin, &cfg.rarity)
    } else {
        Margin::Symmetric(cfg.margin)
    }
}

fn attenuation_of(cfg: &LossConfig) -> Attenuation<'_> {
    if cfg.asymmetric {
        Attenuation::Asymmetric(cfg.gamma, &cfg.rarity)
    } else {
        Attenuation::Symmetric(cfg.gamma)
    }
}

fn evaluate_kind(
    kind: LossKind,
    cfg: &LossConfig,
    z: &LogitField,
    y: &LabelField,
) -> Result<(LossValue, LogitGradField)> {
    let eps = cfg.dsc_epsilon;
    match kind {
        LossKind::Ce => ce_loss(z, y),
        LossKind::MarginCe => margin_ce_loss(z, y, cfg.margin, &cfg.rarity, cfg.asymmetric),
        LossKind::FocalCe => focal_ce_loss(z, y, cfg.gamma, &cfg.rarity, cfg.asymmetric),
        LossKind::CombinedCe => {
            check_rarity(&cfg.rarity, z.classes())?;
            cross_entropy::ce_family(z, y, margin_of(cfg), attenuation_of(cfg))
        }
        LossKind::Dsc => dice::dice_on_logits(z, y, Margin::None, Attenuation::None, eps),
        LossKind::MarginDsc => {
            check_rarity(&cfg.rarity, z.classes())?;
            dice::dice_on_logits(z, y, margin_of(cfg), Attenuation::None, eps)
        }
        LossKind::FocalDsc => {
            check_rarity(&cfg.rarity, z.classes())?;
            dice::dice_on_logits(z, y, Margin::None, attenuation_of(cfg), eps)
        }
        LossKind::CombinedDsc => {
            check_rarity(&cfg.rarity, z.classes())?;
            dice::dice_on_logits(z, y, margin_of(cfg), attenuation_of(cfg), eps)
        }
        LossKind::Fbeta => {
            let p = z.softmax()?;
            let (v, dp) = fbeta_loss(&p, y, cfg.beta, eps)?;
            Ok((v, dice::chain_softmax(&p, &dp)))
        }
    }
}

/// Evaluates a configured loss on logits, returning the value and `∂L/∂z`.
///
/// `combined_*` kinds honor `asymmetric`; with it unset they combine the
/// symmetric margin and focal terms.
pub fn evaluate(
    cfg: &LossConfig,
    z: &LogitField,
    y: &LabelField,
) -> Result<(LossValue, LogitGradField)> {
    let (mut value, mut grad) = evaluate_kind(cfg.kind, cfg, z, y)?;
    if cfg.add_dsc {
        let dice_kind = cfg.kind.dice_counterpart().ok_or_else(|| {
            Error::InvalidInput(format!("add_dsc not supported for {}", cfg.kind.name()))
        })?;
        let (v, g) = evaluate_kind(dice_kind, cfg, z, y)?;
        value.add(&v);
        grad.add_assign(&g)?;
    }
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = LossConfig::new(LossKind::FocalCe, Rarity::indicator(2, &[1]))
            .asymmetric(true)
            .with_gamma(2.0);
        let text = toml::to_string(&cfg).unwrap();
        let back: LossConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.label(), "asym-focal_ce");
    }

    #[test]
    fn validation_reports_field_path() {
        let mut cfg = LossConfig::new(LossKind::Dsc, Rarity::indicator(2, &[1]));
        cfg.add_dsc = true;
        let err = cfg.validate("loss").unwrap_err();
        assert!(err.to_string().contains("loss.add_dsc"));
        cfg.add_dsc = false;
        cfg.gamma = -1.0;
        assert!(cfg.validate("loss").unwrap_err().to_string().contains("loss.gamma"));
    }

    #[test]
    fn ce_plus_dsc_is_the_sum() {
        let z = LogitField::new(2, vec![0.3, -0.2, 1.5, 0.1, -0.7, 0.9]).unwrap();
        let y = LabelField::from_classes(2, &[0, 1, 1]).unwrap();
        let mut cfg = LossConfig::new(LossKind::Ce, Rarity::indicator(2, &[1]));
        let (ce, _) = evaluate(&cfg, &z, &y).unwrap();
        cfg.kind = LossKind::Dsc;
        let (dsc, _) = evaluate(&cfg, &z, &y).unwrap();
        cfg.kind = LossKind::Ce;
        cfg.add_dsc = true;
        let (both, _) = evaluate(&cfg, &z, &y).unwrap();
        assert!((both.total - ce.total - dsc.total).abs() < 1e-14);
    }
}
