use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::autodiff::Architecture;
use crate::data::TaskSpec;
use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::metrics::Connectivity;
use crate::regularizers::{AdvConfig, AugConfig, MixupConfig};

/// Parses TOML, reporting schema violations with their dotted field path.
pub fn parse_toml<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    let de = toml::Deserializer::parse(text)
        .map_err(|e| Error::config(origin, e.to_string().trim().to_string()))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { origin.to_string() } else { path };
        Error::config(path, e.into_inner().message().trim().to_string())
    })
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_toml(&text, &path.display().to_string())
}

/// Where the images come from: a generated dataset on disk, a task file, or
/// an inline task generated in memory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    pub manifest: Option<PathBuf>,
    pub task_file: Option<PathBuf>,
    pub task: Option<TaskSpec>,
}

impl DataSource {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        let given = [self.manifest.is_some(), self.task_file.is_some(), self.task.is_some()];
        if given.iter().filter(|&&g| g).count() != 1 {
            return Err(Error::config(
                prefix.trim_end_matches('.'),
                "set exactly one of manifest, task_file, task",
            ));
        }
        if let Some(t) = &self.task {
            t.validate(&format!("{prefix}task."))?;
        }
        Ok(())
    }

    /// Makes relative paths relative to `base`.
    pub fn resolve(&mut self, base: &Path) {
        for p in [&mut self.manifest, &mut self.task_file].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Widths of the 3x3 conv blocks before the 1x1 class head.
    pub widths: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            widths: vec![8, 16, 16],
        }
    }
}

impl ModelConfig {
    pub fn architecture(&self, in_channels: usize, classes: usize) -> Architecture {
        Architecture::conv_stack(in_channels, &self.widths, classes)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub momentum: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub patch_size: usize,
    /// Share of patches centered on a foreground pixel.
    pub fg_fraction: f64,
    /// Steps per point of the training curve.
    pub log_every: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            momentum: 0.9,
            steps: 3000,
            batch_size: 16,
            patch_size: 32,
            fg_fraction: 0.5,
            log_every: 100,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        let at = |f: &str| format!("{prefix}{f}");
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(at("lr"), "must be > 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(at("momentum"), "must be in [0, 1)"));
        }
        for (name, v) in [
            ("steps", self.steps),
            ("batch_size", self.batch_size),
            ("patch_size", self.patch_size),
            ("log_every", self.log_every),
        ] {
            if v == 0 {
                return Err(Error::config(at(name), "must be >= 1"));
            }
        }
        if !(0.0..=1.0).contains(&self.fg_fraction) {
            return Err(Error::config(at("fg_fraction"), "must be in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub beta: f64,
    pub connectivity: Connectivity,
    /// Compute the logit-shift report after training.
    pub diagnose: bool,
    /// Per-class sample cap of the logit-shift report.
    pub cap: usize,
    pub edges: Option<Vec<f64>>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            connectivity: Connectivity::Four,
            diagnose: true,
            cap: crate::diagnostics::DEFAULT_CAP,
            edges: None,
        }
    }
}

fn one() -> f64 {
    1.0
}

/// One experiment: a loss and regularizer setup trained on a data fraction
/// for each listed seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    #[serde(default = "one")]
    pub train_fraction: f64,
    #[serde(default)]
    pub master_seed: u64,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub precision: Precision,
    pub loss: LossConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    pub adversarial: Option<AdvConfig>,
    pub mixup: Option<MixupConfig>,
    pub augmentation: Option<AugConfig>,
    #[serde(default)]
    pub eval: EvalConfig,
    /// Label used in reports; defaults to the loss label.
    pub name: Option<String>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg: RunConfig = read_toml(path)?;
        cfg.data.resolve(path.parent().unwrap_or(Path::new(".")));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate("data.")?;
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::config("train_fraction", "must be in (0, 1]"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "list at least one seed"));
        }
        self.loss.validate("loss.")?;
        if self.model.widths.contains(&0) {
            return Err(Error::config("model.widths", "widths must be >= 1"));
        }
        self.optimizer.validate("optimizer.")?;
        if let Some(a) = &self.adversarial {
            a.validate("adversarial.")?;
        }
        if let Some(m) = &self.mixup {
            m.validate("mixup.")?;
        }
        if let Some(a) = &self.augmentation {
            a.validate("augmentation.")?;
        }
        if !(self.eval.beta > 0.0) {
            return Err(Error::config("eval.beta", "must be > 0"));
        }
        if let Some(e) = &self.eval.edges {
            if e.is_empty() || e.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::config("eval.edges", "must be non-empty and increasing"));
            }
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.loss.label())
    }

    pub fn classes(&self) -> usize {
        self.loss.rarity.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seeds = [1]
[data.task]
n_train = 2
n_test = 1
[loss]
kind = "ce"
rarity = [0.0, 1.0]
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg: RunConfig = parse_toml(MINIMAL, "run.toml").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.optimizer.steps, 3000);
        assert_eq!(cfg.optimizer.batch_size, 16);
        assert_eq!(cfg.label(), "ce");
    }

    #[test]
    fn schema_errors_name_the_field() {
        let typo = MINIMAL.replace("n_test = 1", "n_test = 1\nblobs = 3");
        let err = parse_toml::<RunConfig>(&typo, "run.toml").unwrap_err();
        assert!(err.is_config());
        assert!(err.to_string().contains("data.task"), "{err}");
        let wrong_type = format!("{MINIMAL}[optimizer]\nlr = \"fast\"\n");
        let err = parse_toml::<RunConfig>(&wrong_type, "run.toml").unwrap_err();
        assert!(err.to_string().contains("optimizer.lr"), "{err}");
        let mut cfg: RunConfig = parse_toml(MINIMAL, "run.toml").unwrap();
        cfg.optimizer.momentum = 1.5;
        assert!(cfg.validate().unwrap_err().to_string().contains("optimizer.momentum"));
        cfg.optimizer.momentum = 0.9;
        cfg.data.manifest = Some("m.jsonl".into());
        assert!(cfg.validate().unwrap_err().to_string().contains("`data`"));
    }
}
