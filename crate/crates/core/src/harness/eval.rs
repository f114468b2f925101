use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::EvalConfig;
use crate::autodiff::{checkpoint, Real, TinyNet};
use crate::data::{Sample, Split};
use crate::diagnostics::{collect_logits, default_edges, logit_shift, LogitShiftReport};
use crate::error::Result;
use crate::metrics::{component_count, evaluate_mask, largest_component, Mask, SegScores};
use crate::numeric::argmax;

/// A trained network of either precision.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyNet {
    F32(TinyNet<f32>),
    F64(TinyNet<f64>),
}

impl AnyNet {
    pub fn save(&self, seed: u64, base: &Path) -> Result<checkpoint::CheckpointManifest> {
        match self {
            AnyNet::F32(n) => checkpoint::save(n, seed, base),
            AnyNet::F64(n) => checkpoint::save(n, seed, base),
        }
    }

    /// Loads a checkpoint in the precision it was saved with.
    pub fn load(base: &Path) -> Result<(Self, checkpoint::CheckpointManifest)> {
        let m = checkpoint::read_manifest(base)?;
        if m.precision == <f64 as Real>::NAME {
            let (n, m) = checkpoint::load::<f64>(base)?;
            Ok((AnyNet::F64(n), m))
        } else {
            let (n, m) = checkpoint::load::<f32>(base)?;
            Ok((AnyNet::F32(n), m))
        }
    }

    /// Per-pixel argmax class of a whole image.
    pub fn predict(&self, s: &Sample) -> Result<Vec<usize>> {
        match self {
            AnyNet::F32(n) => predict(n, s),
            AnyNet::F64(n) => predict(n, s),
        }
    }

    pub fn diagnose(
        &self,
        train: &[Sample],
        test: &[Sample],
        cfg: &EvalConfig,
        seed: u64,
    ) -> Result<LogitShiftReport> {
        match self {
            AnyNet::F32(n) => diagnose(n, train, test, cfg, seed),
            AnyNet::F64(n) => diagnose(n, train, test, cfg, seed),
        }
    }
}

pub fn predict<T: Real>(net: &TinyNet<T>, s: &Sample) -> Result<Vec<usize>> {
    let out = net.forward(&s.tensor::<T>())?;
    let c = net.classes();
    Ok(out
        .data()
        .chunks_exact(c)
        .map(|z| argmax(&z.iter().map(|v| v.to_f64()).collect::<Vec<_>>()))
        .collect())
}

/// Scores of one image, foreground being every non-zero class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageEval {
    pub raw: SegScores,
    pub post: SegScores,
    pub gt_components: usize,
    pub raw_components: usize,
    pub post_components: usize,
}

/// Means of per-image scores; `hd95` averages the images where it is defined.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub dsc: f64,
    pub sensitivity: f64,
    pub precision: f64,
    pub specificity: f64,
    pub fbeta: f64,
    pub hd95: Option<f64>,
}

impl ScoreSummary {
    pub fn mean(scores: &[SegScores]) -> Self {
        let n = scores.len() as f64;
        let avg = |f: fn(&SegScores) -> f64| scores.iter().map(f).sum::<f64>() / n;
        let hd: Vec<f64> = scores.iter().filter_map(|s| s.hd95).collect();
        Self {
            dsc: avg(|s| s.dsc),
            sensitivity: avg(|s| s.sensitivity),
            precision: avg(|s| s.precision),
            specificity: avg(|s| s.specificity),
            fbeta: avg(|s| s.fbeta),
            hd95: (!hd.is_empty()).then(|| hd.iter().sum::<f64>() / hd.len() as f64),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub images: Vec<ImageEval>,
    pub raw: ScoreSummary,
    pub post: ScoreSummary,
}

pub fn evaluate_image(pred: &[usize], s: &Sample, cfg: &EvalConfig) -> Result<ImageEval> {
    let (h, w) = (s.height, s.width);
    let gt = Mask::new(h, w, s.labels.iter().map(|&l| l != 0).collect())?;
    let raw_mask = Mask::new(h, w, pred.iter().map(|&p| p != 0).collect())?;
    let post_mask = largest_component(&raw_mask, cfg.connectivity);
    Ok(ImageEval {
        raw: evaluate_mask(&raw_mask, &gt, cfg.beta)?,
        post: evaluate_mask(&post_mask, &gt, cfg.beta)?,
        gt_components: component_count(&gt, cfg.connectivity),
        raw_components: component_count(&raw_mask, cfg.connectivity),
        post_components: component_count(&post_mask, cfg.connectivity),
    })
}

pub fn evaluate(net: &AnyNet, images: &[Sample], cfg: &EvalConfig) -> Result<EvalReport> {
    let images = images
        .iter()
        .map(|s| evaluate_image(&net.predict(s)?, s, cfg))
        .collect::<Result<Vec<_>>>()?;
    let raw: Vec<SegScores> = images.iter().map(|e| e.raw).collect();
    let post: Vec<SegScores> = images.iter().map(|e| e.post).collect();
    Ok(EvalReport {
        raw: ScoreSummary::mean(&raw),
        post: ScoreSummary::mean(&post),
        images,
    })
}

pub fn diagnose<T: Real>(
    net: &TinyNet<T>,
    train: &[Sample],
    test: &[Sample],
    cfg: &EvalConfig,
    seed: u64,
) -> Result<LogitShiftReport> {
    let a = collect_logits(net, train, Split::Train, cfg.cap, seed)?;
    let b = collect_logits(net, test, Split::Test, cfg.cap, seed)?;
    let edges = cfg.edges.clone().unwrap_or_else(default_edges);
    logit_shift(&a, &b, &edges)
}
