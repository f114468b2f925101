use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{read_toml, DataSource, EvalConfig, ModelConfig, OptimizerConfig, Precision, RunConfig};
use super::run::{run_cell, write_json, write_rows, CellStatus, Dataset, ResultRow, RunReport};
use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::regularizers::{AdvConfig, AugConfig, MixupConfig};

/// Settings shared by every cell of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBase {
    pub data: DataSource,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

/// A loss plus optional regularizers, i.e. one row of a comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    pub loss: LossConfig,
    pub adversarial: Option<AdvConfig>,
    pub mixup: Option<MixupConfig>,
    pub augmentation: Option<AugConfig>,
    /// Restricts this variant to some of the grid fractions.
    pub fractions: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub base: SweepBase,
    pub fractions: Vec<f64>,
    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,
}

impl SweepGrid {
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut grid: SweepGrid = read_toml(path)?;
        grid.base.data.resolve(path.parent().unwrap_or(Path::new(".")));
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fractions.is_empty() {
            return Err(Error::config("fractions", "list at least one fraction"));
        }
        if self.variants.is_empty() {
            return Err(Error::config("variants", "list at least one variant"));
        }
        let mut names: Vec<&str> = self.variants.iter().map(|v| v.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::config("variants", format!("duplicate name {:?}", w[0])));
        }
        for (i, v) in self.variants.iter().enumerate() {
            if v.name.is_empty() || v.name.contains(['/', '\\', ',']) {
                return Err(Error::config(format!("variants[{i}].name"), "must be non-empty without / \\ ,"));
            }
            for f in v.fractions.as_deref().unwrap_or_default() {
                if !self.fractions.contains(f) {
                    return Err(Error::config(
                        format!("variants[{i}].fractions"),
                        format!("{f} is not one of the grid fractions"),
                    ));
                }
            }
            for &f in self.variant_fractions(v) {
                self.cell_config(v, f).validate().map_err(|e| match e {
                    Error::Config { path, reason } => {
                        let scoped = if path.starts_with("data") || path.starts_with("model")
                            || path.starts_with("optimizer") || path.starts_with("eval")
                        {
                            format!("base.{path}")
                        } else if path == "train_fraction" || path == "seeds" {
                            path
                        } else {
                            format!("variants[{i}].{path}")
                        };
                        Error::Config { path: scoped, reason }
                    }
                    e => e,
                })?;
            }
        }
        Ok(())
    }

    fn variant_fractions<'a>(&'a self, v: &'a Variant) -> &'a [f64] {
        v.fractions.as_deref().unwrap_or(&self.fractions)
    }

    pub fn cell_config(&self, v: &Variant, fraction: f64) -> RunConfig {
        RunConfig {
            data: self.base.data.clone(),
            train_fraction: fraction,
            master_seed: self.base.master_seed,
            seeds: self.seeds.clone(),
            precision: self.base.precision,
            loss: v.loss.clone(),
            model: self.base.model.clone(),
            optimizer: self.base.optimizer.clone(),
            adversarial: v.adversarial.clone(),
            mixup: v.mixup.clone(),
            augmentation: v.augmentation.clone(),
            eval: self.base.eval.clone(),
            name: Some(v.name.clone()),
        }
    }

    /// Cells in output order: variant, then fraction, then seed.
    pub fn cells(&self) -> Vec<(RunConfig, u64)> {
        let mut out = Vec::new();
        for v in &self.variants {
            for &f in self.variant_fractions(v) {
                let cfg = self.cell_config(v, f);
                for &s in &self.seeds {
                    out.push((cfg.clone(), s));
                }
            }
        }
        out
    }
}

pub struct SweepOutcome {
    pub reports: Vec<RunReport>,
    pub rows: Vec<ResultRow>,
}

impl SweepOutcome {
    pub fn all_ok(&self) -> bool {
        self.reports.iter().all(|r| r.status == CellStatus::Ok)
    }

    pub fn find(&self, name: &str, fraction: f64, seed: u64) -> Option<&RunReport> {
        self.reports
            .iter()
            .find(|r| r.name == name && r.train_fraction == fraction && r.seed == seed)
    }
}

/// Runs every cell in order on an already loaded dataset. With `out_dir`,
/// writes `sweep.csv` and one JSON report per cell under `reports/`.
pub fn run_sweep_on(grid: &SweepGrid, data: &Dataset, out_dir: Option<&Path>) -> Result<SweepOutcome> {
    let cells = grid.cells();
    let mut reports = Vec::with_capacity(cells.len());
    for (i, (cfg, seed)) in cells.iter().enumerate() {
        let (report, _) = run_cell(cfg, data, *seed)?;
        log::info!(
            "[{}/{}] {} {:?} in {:.1}s",
            i + 1,
            cells.len(),
            report.run_id,
            report.status,
            report.wall_time_s
        );
        reports.push(report);
    }
    let rows: Vec<ResultRow> = reports.iter().map(ResultRow::from_report).collect();
    if let Some(dir) = out_dir {
        let rdir = dir.join("reports");
        fs::create_dir_all(&rdir).map_err(|e| Error::io(&rdir, e))?;
        for r in &reports {
            write_json(r, &rdir.join(format!("{}.json", r.run_id)))?;
        }
        write_rows(&rows, &dir.join("sweep.csv"))?;
    }
    Ok(SweepOutcome { reports, rows })
}

pub fn run_sweep(grid: &SweepGrid, out_dir: Option<&Path>) -> Result<SweepOutcome> {
    let data = Dataset::load(&grid.base.data)?;
    run_sweep_on(grid, &data, out_dir)
}
