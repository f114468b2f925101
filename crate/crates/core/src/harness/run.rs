use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{read_toml, DataSource, Precision, RunConfig};
use super::eval::{evaluate, AnyNet, EvalReport};
use super::train::{train, CurvePoint, RunSeeds, TrainStats};
use crate::data::{subset_indices, DatasetManifest, Sample, Split, TaskSpec};
use crate::diagnostics::LogitShiftReport;
use crate::error::{Error, Result};
use crate::seed;

/// Train and test images held in memory.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Dataset {
    pub fn from_task(spec: &TaskSpec) -> Result<Self> {
        let mut d = Dataset {
            train: Vec::new(),
            test: Vec::new(),
        };
        for (split, _, s) in spec.samples()? {
            match split {
                Split::Train => d.train.push(s),
                Split::Test => d.test.push(s),
            }
        }
        Ok(d)
    }

    pub fn from_manifest(m: &DatasetManifest) -> Result<Self> {
        Ok(Dataset {
            train: m.load_split(Split::Train)?,
            test: m.load_split(Split::Test)?,
        })
    }

    pub fn load(src: &DataSource) -> Result<Self> {
        if let Some(m) = &src.manifest {
            return Self::from_manifest(&DatasetManifest::read(m)?);
        }
        if let Some(f) = &src.task_file {
            let spec: TaskSpec = read_toml(f)?;
            spec.validate("")?;
            return Self::from_task(&spec);
        }
        match &src.task {
            Some(t) => Self::from_task(t),
            None => Err(Error::config("data", "no data source given")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Diverged,
}

/// Everything recorded for one (configuration, seed) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub name: String,
    pub seed: u64,
    pub train_fraction: f64,
    pub train_images: usize,
    pub status: CellStatus,
    pub detail: Option<String>,
    pub eval: Option<EvalReport>,
    pub shift: Option<LogitShiftReport>,
    pub curve: Vec<CurvePoint>,
    pub stats: TrainStats,
    pub wall_time_s: f64,
}

pub fn run_id(name: &str, fraction: f64, seed: u64) -> String {
    format!("{name}__f{fraction}__s{seed}")
}

/// Trains, evaluates and diagnoses one seed of a configuration. Divergence
/// is recorded in the report rather than returned as an error.
pub fn run_cell(cfg: &RunConfig, data: &Dataset, seed: u64) -> Result<(RunReport, Option<AnyNet>)> {
    let start = Instant::now();
    let seeds = RunSeeds::new(cfg.master_seed, seed);
    let kept = subset_indices(data.train.len(), cfg.train_fraction, seeds.subset)?;
    let train_images: Vec<Sample> = kept.iter().map(|&i| data.train[i].clone()).collect();
    let name = cfg.label();
    let mut report = RunReport {
        run_id: run_id(&name, cfg.train_fraction, seed),
        name,
        seed,
        train_fraction: cfg.train_fraction,
        train_images: train_images.len(),
        status: CellStatus::Ok,
        detail: None,
        eval: None,
        shift: None,
        curve: Vec::new(),
        stats: TrainStats::default(),
        wall_time_s: 0.0,
    };
    let trained = match cfg.precision {
        Precision::F32 => train::<f32>(cfg, &train_images, seeds)
            .map(|o| (AnyNet::F32(o.net), o.curve, o.stats)),
        Precision::F64 => train::<f64>(cfg, &train_images, seeds)
            .map(|o| (AnyNet::F64(o.net), o.curve, o.stats)),
    };
    let net = match trained {
        Ok((net, curve, stats)) => {
            report.curve = curve;
            report.stats = stats;
            net
        }
        Err(e @ Error::Divergence { .. }) => {
            log::warn!("{}: {e}", report.run_id);
            report.status = CellStatus::Diverged;
            report.detail = Some(e.to_string());
            report.wall_time_s = start.elapsed().as_secs_f64();
            return Ok((report, None));
        }
        Err(e) => return Err(e),
    };
    report.eval = Some(evaluate(&net, &data.test, &cfg.eval)?);
    if cfg.eval.diagnose {
        let s = seed::derive(cfg.master_seed, &[seed::tag::DIAGNOSE, seed]);
        report.shift = Some(net.diagnose(&train_images, &data.test, &cfg.eval, s)?);
    }
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok((report, Some(net)))
}

/// One CSV row per cell. Rates are means of per-image scores on the raw
/// prediction; `*_post` columns are after largest-component filtering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub run_id: String,
    pub seed: u64,
    pub loss_kind: String,
    pub train_fraction: f64,
    pub dsc: Option<f64>,
    pub sen: Option<f64>,
    pub prc: Option<f64>,
    pub spc: Option<f64>,
    pub hd95_raw: Option<f64>,
    pub hd95_post: Option<f64>,
    pub status: CellStatus,
    pub wall_time_s: f64,
    pub dsc_post: Option<f64>,
    pub sen_post: Option<f64>,
    pub prc_post: Option<f64>,
    pub delta_z_bg: Option<f64>,
    pub delta_z_fg: Option<f64>,
}

impl ResultRow {
    pub fn from_report(r: &RunReport) -> Self {
        let raw = r.eval.as_ref().map(|e| e.raw);
        let post = r.eval.as_ref().map(|e| e.post);
        let dz = |c: usize| r.shift.as_ref().and_then(|s| s.class(c)).map(|c| c.delta_z);
        Self {
            run_id: r.run_id.clone(),
            seed: r.seed,
            loss_kind: r.name.clone(),
            train_fraction: r.train_fraction,
            dsc: raw.map(|s| s.dsc),
            sen: raw.map(|s| s.sensitivity),
            prc: raw.map(|s| s.precision),
            spc: raw.map(|s| s.specificity),
            hd95_raw: raw.and_then(|s| s.hd95),
            hd95_post: post.and_then(|s| s.hd95),
            status: r.status,
            wall_time_s: r.wall_time_s,
            dsc_post: post.map(|s| s.dsc),
            sen_post: post.map(|s| s.sensitivity),
            prc_post: post.map(|s| s.precision),
            delta_z_bg: dz(0),
            delta_z_fg: dz(1),
        }
    }
}

pub fn write_rows(rows: &[ResultRow], path: &Path) -> Result<()> {
    let csv_err = |e: csv::Error| Error::InvalidInput(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let csv_err = |e: csv::Error| Error::InvalidInput(format!("{}: {e}", path.display()));
    csv::Reader::from_path(path)
        .map_err(csv_err)?
        .deserialize()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(csv_err)
}

pub fn write_json<S: Serialize>(value: &S, path: &Path) -> Result<()> {
    let bytes = serde_json::to_vec_pretty(value)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
