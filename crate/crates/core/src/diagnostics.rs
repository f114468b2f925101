//! Logit-distribution statistics on training versus unseen data.
//!
//! A sample's margin is its true-class logit minus the largest competing
//! logit, so a negative margin means the sample crossed the decision
//! boundary. `ẑ` is the mean margin of a class on one split and
//! `Δẑ = |ẑ_test| - |ẑ_train|`.

use std::fs::File;
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Real, TinyNet};
use crate::data::{Sample, Split};
use crate::error::{Error, Result};
use crate::numeric::argmax;
use crate::seed;

pub const DEFAULT_CAP: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogitSample {
    pub logits: Vec<f64>,
    pub class: usize,
    pub split: Split,
}

impl LogitSample {
    pub fn margin(&self) -> f64 {
        let t = self.logits[self.class];
        let rival = self
            .logits
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != self.class)
            .map(|(_, &v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        t - rival
    }

    pub fn crossed(&self) -> bool {
        argmax(&self.logits) != self.class
    }
}

/// Runs the network on whole images and keeps up to `cap` pixels per true
/// class, chosen uniformly with the given seed.
pub fn collect_logits<T: Real>(
    net: &TinyNet<T>,
    images: &[Sample],
    split: Split,
    cap: usize,
    seed: u64,
) -> Result<Vec<LogitSample>> {
    let classes = net.classes();
    let mut pool: Vec<Vec<LogitSample>> = vec![Vec::new(); classes];
    if cap == 0 {
        return Ok(Vec::new());
    }
    for s in images {
        let out = net.forward(&s.tensor::<T>())?;
        for (px, z) in out.data().chunks_exact(classes).enumerate() {
            let class = s.labels[px] as usize;
            if class >= classes {
                return Err(Error::InvalidInput(format!(
                    "label {class} exceeds network class count {classes}"
                )));
            }
            let logits: Vec<f64> = z.iter().map(|v| v.to_f64()).collect();
            if logits.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("non-finite logit at pixel {px}")));
            }
            pool[class].push(LogitSample {
                logits,
                class,
                split,
            });
        }
    }
    let mut rng = seed::rng(seed::derive(seed, &[seed::tag::DIAGNOSE, split as u64]));
    let mut out = Vec::new();
    for (c, samples) in pool.into_iter().enumerate() {
        if samples.is_empty() {
            log::warn!("class {c} has no pixels in the {split} split");
            continue;
        }
        if samples.len() <= cap {
            out.extend(samples);
            continue;
        }
        let mut picked = index::sample(&mut rng, samples.len(), cap).into_vec();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| samples[i].clone()));
    }
    Ok(out)
}

/// Margin histogram with an underflow bin before the first edge and an
/// overflow bin after the last.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub counts: Vec<u64>,
}

fn bin_of(edges: &[f64], v: f64) -> usize {
    edges.partition_point(|&e| e <= v)
}

fn bin_bounds(edges: &[f64], b: usize) -> (f64, f64) {
    let left = if b == 0 { f64::NEG_INFINITY } else { edges[b - 1] };
    let right = edges.get(b).copied().unwrap_or(f64::INFINITY);
    (left, right)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub count: usize,
    pub mean: Vec<f64>,
    /// Per-class logit variance (diagonal of the covariance).
    pub variance: Vec<f64>,
    pub z_hat: f64,
    pub crossing_rate: f64,
    pub histogram: Histogram,
}

impl SplitStats {
    fn from_samples(samples: &[&LogitSample], edges: &[f64]) -> Self {
        let n = samples.len() as f64;
        let c = samples[0].logits.len();
        let mut mean = vec![0.0; c];
        for s in samples {
            for (m, v) in mean.iter_mut().zip(&s.logits) {
                *m += v / n;
            }
        }
        let mut variance = vec![0.0; c];
        for s in samples {
            for ((acc, v), m) in variance.iter_mut().zip(&s.logits).zip(&mean) {
                *acc += (v - m).powi(2) / n;
            }
        }
        let mut counts = vec![0u64; edges.len() + 1];
        let mut margin_sum = 0.0;
        let mut crossed = 0usize;
        for s in samples {
            let m = s.margin();
            margin_sum += m;
            counts[bin_of(edges, m)] += 1;
            crossed += usize::from(s.crossed());
        }
        Self {
            count: samples.len(),
            mean,
            variance,
            z_hat: margin_sum / n,
            crossing_rate: crossed as f64 / n,
            histogram: Histogram { counts },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassShift {
    pub class: usize,
    pub train: SplitStats,
    pub test: SplitStats,
    pub delta_z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogitShiftReport {
    pub edges: Vec<f64>,
    pub classes: Vec<ClassShift>,
}

impl LogitShiftReport {
    pub fn class(&self, c: usize) -> Option<&ClassShift> {
        self.classes.iter().find(|s| s.class == c)
    }
}

/// Evenly spaced margin-bin edges on `[-20, 20]`, step 0.5.
pub fn default_edges() -> Vec<f64> {
    (0..=80).map(|i| -20.0 + 0.5 * i as f64).collect()
}

/// Per-class train/test statistics. Classes missing from either split are
/// left out with a warning.
pub fn logit_shift(
    train: &[LogitSample],
    test: &[LogitSample],
    edges: &[f64],
) -> Result<LogitShiftReport> {
    if edges.windows(2).any(|w| !(w[0] < w[1])) || edges.iter().any(|e| !e.is_finite()) {
        return Err(Error::InvalidInput("histogram edges must be finite and increasing".into()));
    }
    let classes = train
        .iter()
        .chain(test)
        .map(|s| s.class + 1)
        .max()
        .unwrap_or(0);
    let mut out = Vec::new();
    for c in 0..classes {
        let a: Vec<&LogitSample> = train.iter().filter(|s| s.class == c).collect();
        let b: Vec<&LogitSample> = test.iter().filter(|s| s.class == c).collect();
        if a.is_empty() || b.is_empty() {
            log::warn!(
                "class {c} omitted from logit-shift report ({} train, {} test samples)",
                a.len(),
                b.len()
            );
            continue;
        }
        let train = SplitStats::from_samples(&a, edges);
        let test = SplitStats::from_samples(&b, edges);
        out.push(ClassShift {
            class: c,
            delta_z: test.z_hat.abs() - train.z_hat.abs(),
            train,
            test,
        });
    }
    Ok(LogitShiftReport {
        edges: edges.to_vec(),
        classes: out,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub class: usize,
    pub split: Split,
    pub bin_left: f64,
    pub bin_right: f64,
    pub count: u64,
}

const EDGES_PREFIX: &str = "# edges: ";

/// Writes margin histograms as CSV; the first line records the bin edges.
pub fn export_histograms(report: &LogitShiftReport, path: &Path) -> Result<()> {
    let csv_err = |e: csv::Error| Error::InvalidInput(format!("{}: {e}", path.display()));
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    let edges: Vec<String> = report.edges.iter().map(|e| e.to_string()).collect();
    use std::io::Write;
    writeln!(file, "{EDGES_PREFIX}{}", edges.join(",")).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    w.write_record(["class", "split", "bin_left", "bin_right", "count"])
        .map_err(csv_err)?;
    for cs in &report.classes {
        for (split, stats) in [(Split::Train, &cs.train), (Split::Test, &cs.test)] {
            for (b, &count) in stats.histogram.counts.iter().enumerate() {
                let (bin_left, bin_right) = bin_bounds(&report.edges, b);
                w.serialize(HistogramRow {
                    class: cs.class,
                    split,
                    bin_left,
                    bin_right,
                    count,
                })
                .map_err(csv_err)?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a file written by [`export_histograms`]: `(edges, rows)`.
pub fn read_histograms(path: &Path) -> Result<(Vec<f64>, Vec<HistogramRow>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: String| Error::InvalidInput(format!("{}: {reason}", path.display()));
    let (first, body) = text.split_once('\n').ok_or_else(|| bad("empty file".into()))?;
    let edges = first
        .strip_prefix(EDGES_PREFIX)
        .ok_or_else(|| bad("missing edges line".into()))?
        .split(',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| bad(format!("edge {s:?}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    let rows = csv::Reader::from_reader(body.as_bytes())
        .deserialize()
        .collect::<std::result::Result<Vec<HistogramRow>, _>>()
        .map_err(|e| bad(e.to_string()))?;
    Ok((edges, rows))
}
