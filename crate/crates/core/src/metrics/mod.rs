//! Segmentation metrics, imbalance statistics and connected-component
//! post-processing on binary masks.

mod components;
mod hausdorff;

use serde::{Deserialize, Serialize};

pub use components::{component_count, largest_component, Connectivity};
pub use hausdorff::{hausdorff95, surface};

use crate::error::{Error, Result};

/// Row-major binary mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape(format!("{height}x{width} mask"), data.len()));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    /// Pixels whose label equals `class`.
    pub fn from_labels(height: usize, width: usize, labels: &[u8], class: u8) -> Result<Self> {
        Self::new(height, width, labels.iter().map(|&l| l == class).collect())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&v| v)
    }

    fn check_same(&self, other: &Mask) -> Result<()> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(Error::shape(
                format!("{}x{}", self.height, self.width),
                format!("{}x{}", other.height, other.width),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl std::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
    }
}

pub fn confusion(pred: &Mask, gt: &Mask) -> Result<ConfusionCounts> {
    pred.check_same(gt)?;
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.data.iter().zip(&gt.data) {
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegScores {
    pub dsc: f64,
    pub sensitivity: f64,
    pub precision: f64,
    pub specificity: f64,
    pub fbeta: f64,
    /// `None` when either mask is empty.
    pub hd95: Option<f64>,
}

/// Overlap rates with the degeneracy conventions: an empty prediction of an
/// empty target scores 1 everywhere; otherwise a zero denominator scores 0.
/// Specificity is 1 when there are no negatives.
pub fn scores(c: &ConfusionCounts, beta: f64) -> SegScores {
    let (tp, fp, fn_, tn) = (c.tp as f64, c.fp as f64, c.fn_ as f64, c.tn as f64);
    let agree_empty = c.tp + c.fp + c.fn_ == 0;
    let rate = |num: f64, den: f64| {
        if agree_empty {
            1.0
        } else if den == 0.0 {
            0.0
        } else {
            num / den
        }
    };
    let b2 = beta * beta;
    SegScores {
        dsc: rate(2.0 * tp, 2.0 * tp + fp + fn_),
        sensitivity: rate(tp, tp + fn_),
        precision: rate(tp, tp + fp),
        specificity: if tn + fp == 0.0 { 1.0 } else { tn / (tn + fp) },
        fbeta: rate((1.0 + b2) * tp, (1.0 + b2) * tp + b2 * fn_ + fp),
        hd95: None,
    }
}

/// Scores of one prediction, including HD95 when both masks are non-empty.
pub fn evaluate_mask(pred: &Mask, gt: &Mask, beta: f64) -> Result<SegScores> {
    let mut s = scores(&confusion(pred, gt)?, beta);
    s.hd95 = match hausdorff95(pred, gt) {
        Ok(v) => Some(v),
        Err(Error::Undefined(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(s)
}

/// Fraction of pixels of each class predicted as that class; `None` for
/// classes absent from `truth`.
pub fn per_class_accuracy(pred: &[usize], truth: &[usize], classes: usize) -> Vec<Option<f64>> {
    let mut hit = vec![0usize; classes];
    let mut all = vec![0usize; classes];
    for (&p, &t) in pred.iter().zip(truth) {
        all[t] += 1;
        hit[t] += usize::from(p == t);
    }
    hit.iter()
        .zip(&all)
        .map(|(&h, &n)| (n > 0).then(|| h as f64 / n as f64))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceStats {
    /// Background/foreground ratio of each image with foreground.
    pub ratios: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    /// Images without foreground, left out of the statistics.
    pub excluded: usize,
}

/// Per-image background/foreground pixel ratios from `(fg, bg)` counts.
pub fn imbalance_ratio(counts: &[(usize, usize)]) -> ImbalanceStats {
    let ratios: Vec<f64> = counts
        .iter()
        .filter(|(fg, _)| *fg > 0)
        .map(|&(fg, bg)| bg as f64 / fg as f64)
        .collect();
    let excluded = counts.len() - ratios.len();
    if excluded > 0 {
        log::warn!("{excluded} image(s) without foreground have an infinite ratio and are excluded");
    }
    let n = ratios.len() as f64;
    let (mean, std) = if ratios.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        let mean = ratios.iter().sum::<f64>() / n;
        let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    };
    ImbalanceStats {
        ratios,
        mean,
        std,
        excluded,
    }
}
