use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::autodiff::{field_to_tensor, logits_to_field, Real, Sgd, Tensor, TinyNet};
use crate::data::{PatchSampler, Sample};
use crate::error::{Error, Result};
use crate::field::LabelField;
use crate::losses;
use crate::regularizers::{
    adversarial_example, apply_augmentation, asym_mixup_field, mixup_pair, Adversarial,
};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Last step of the window.
    pub step: usize,
    /// Mean loss over the window.
    pub loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub augmented: usize,
    pub mixed: usize,
    pub adversarial: usize,
    pub adversarial_skipped: usize,
}

pub struct TrainOutcome<T> {
    pub net: TinyNet<T>,
    pub curve: Vec<CurvePoint>,
    pub stats: TrainStats,
}

/// Seeds of one training run, derived from the master seed and the run seed
/// only, so every loss variant with the same seed sees the same data subset,
/// initialization and patch stream.
#[derive(Clone, Copy, Debug)]
pub struct RunSeeds {
    pub subset: u64,
    pub init: u64,
    pub stream: u64,
}

impl RunSeeds {
    pub fn new(master: u64, seed: u64) -> Self {
        Self {
            subset: seed::derive(master, &[seed::tag::SUBSET, seed]),
            init: seed::derive(master, &[seed::tag::INIT, seed]),
            stream: seed::derive(master, &[seed::tag::TRAIN, seed]),
        }
    }
}

struct Batch<T> {
    images: Vec<Tensor<T>>,
    labels: Vec<LabelField>,
}

impl<T: Real> Batch<T> {
    fn push(&mut self, x: Tensor<T>, y: LabelField) {
        self.images.push(x);
        self.labels.push(y);
    }
}

/// Trains a fresh network on `images` with the configured loss and
/// regularizers. Mixed and adversarial samples are appended to each batch of
/// sampled patches.
pub fn train<T: Real>(cfg: &RunConfig, images: &[Sample], seeds: RunSeeds) -> Result<TrainOutcome<T>> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidInput("no training images".into()))?;
    let classes = cfg.classes();
    let arch = cfg.model.architecture(first.channels, classes);
    let mut net = TinyNet::<T>::init(arch, &mut seed::rng(seeds.init))?;
    let opt_cfg = &cfg.optimizer;
    let mut opt = Sgd::<T>::new(opt_cfg.lr, opt_cfg.momentum)?;
    let samplers = images
        .iter()
        .map(|s| PatchSampler::new(s, opt_cfg.patch_size, opt_cfg.fg_fraction))
        .collect::<Result<Vec<_>>>()?;
    let rarity = &cfg.loss.rarity;
    let mut rng = seed::rng(seeds.stream);
    let mut curve = Vec::new();
    let mut stats = TrainStats::default();
    let mut window = 0.0;
    for step in 0..opt_cfg.steps {
        let mut batch = Batch {
            images: Vec::new(),
            labels: Vec::new(),
        };
        for _ in 0..opt_cfg.batch_size {
            let mut p = samplers[rng.random_range(0..samplers.len())].draw(&mut rng).sample;
            if let Some(aug) = &cfg.augmentation {
                stats.augmented += usize::from(apply_augmentation(&mut p, aug, rarity, &mut rng));
            }
            let y = p.label_field(classes)?;
            batch.push(p.tensor(), y);
        }
        let base = opt_cfg.batch_size;
        if let Some(mix) = &cfg.mixup {
            for i in 0..base {
                let k = rng.random_range(0..base);
                let lambda = mix.draw_lambda(&mut rng);
                let (xi, yi) = (&batch.images[i], &batch.labels[i]);
                let (xk, yk) = (&batch.images[k], &batch.labels[k]);
                let (x, soft) = mixup_pair(xi, yi, xk, yk, lambda)?;
                let y = if mix.asymmetric {
                    asym_mixup_field(yi, yk, lambda, mix.margin, rarity)?
                } else {
                    soft
                };
                batch.push(x, y);
                stats.mixed += 1;
            }
        }
        if let Some(adv) = &cfg.adversarial {
            for i in 0..base {
                match adversarial_example(&net, &batch.images[i], &batch.labels[i], adv, &cfg.loss)? {
                    Adversarial::Sample(x) => {
                        let y = batch.labels[i].clone();
                        batch.push(x, y);
                        stats.adversarial += 1;
                    }
                    _ => stats.adversarial_skipped += 1,
                }
            }
        }
        let x = Tensor::concat(&batch.images.iter().collect::<Vec<_>>())?;
        let y = LabelField::concat(&batch.labels.iter().collect::<Vec<_>>())?;
        let rec = net.record(&x)?;
        if !rec.output().all_finite() {
            return Err(Error::Divergence {
                step,
                detail: "non-finite logits".into(),
            });
        }
        let z = logits_to_field(rec.output())?;
        let (value, dz) = losses::evaluate(&cfg.loss, &z, &y)?;
        if !value.total.is_finite() {
            return Err(Error::Divergence {
                step,
                detail: format!("loss is {}", value.total),
            });
        }
        let grads = rec.backward(field_to_tensor::<T>(&dz, rec.output().shape())?)?;
        opt.step(&mut net, &grads)?;
        window += value.total;
        if (step + 1) % opt_cfg.log_every == 0 || step + 1 == opt_cfg.steps {
            let len = (step % opt_cfg.log_every + 1) as f64;
            curve.push(CurvePoint {
                step: step + 1,
                loss: window / len,
            });
            window = 0.0;
        }
    }
    Ok(TrainOutcome { net, curve, stats })
}
