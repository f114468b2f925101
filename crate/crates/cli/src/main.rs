use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use asymseg::data::{generate, DatasetManifest, Split, TaskSpec};
use asymseg::diagnostics::export_histograms;
use asymseg::harness::{
    read_toml, run_cell, run_sweep, write_json, write_rows, AnyNet, CellStatus, Dataset,
    EvalConfig, ResultRow, RunConfig, SweepGrid,
};
use asymseg::metrics::Connectivity;
use clap::{Parser, Subcommand, ValueEnum};

/// Class-imbalance segmentation experiments on synthetic data.
///
/// Exit codes: 0 on success, 2 for configuration errors, 3 for any other
/// failure including diverged training cells.
#[derive(Parser)]
#[command(name = "asymseg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset: NPY images and labels plus a manifest.
    GenData {
        /// Task specification (TOML).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train every seed of a run configuration, then evaluate and diagnose.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on one split of a dataset.
    Eval {
        /// Checkpoint base path (without extension).
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        /// Keep only the largest foreground component before scoring.
        #[arg(long, value_enum, default_value_t = Switch::On)]
        post: Switch,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, value_enum, default_value_t = ConnArg::Four)]
        connectivity: ConnArg,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare train and test logit statistics of a checkpoint.
    Diagnose {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Directory for `shift.json` and `histograms.csv`.
        #[arg(long)]
        out: PathBuf,
        /// Samples kept per class and split.
        #[arg(long, default_value_t = asymseg::diagnostics::DEFAULT_CAP)]
        cap: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a grid of variants, fractions and seeds.
    Sweep {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConnArg {
    #[value(name = "4")]
    Four,
    #[value(name = "8")]
    Eight,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config = e
                .chain()
                .any(|c| c.downcast_ref::<asymseg::Error>().is_some_and(|e| e.is_config()));
            ExitCode::from(if config { 2 } else { 3 })
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenData { spec, out } => gen_data(&spec, &out),
        Command::Train { config, out } => train(&config, &out),
        Command::Eval {
            checkpoint,
            manifest,
            split,
            post,
            beta,
            connectivity,
            out,
        } => {
            let eval = EvalConfig {
                beta,
                connectivity: match connectivity {
                    ConnArg::Four => Connectivity::Four,
                    ConnArg::Eight => Connectivity::Eight,
                },
                ..EvalConfig::default()
            };
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
            eval_checkpoint(&checkpoint, &manifest, split, post == Switch::On, &eval, out.as_deref())
        }
        Command::Diagnose {
            checkpoint,
            manifest,
            out,
            cap,
            seed,
        } => diagnose(&checkpoint, &manifest, &out, cap, seed),
        Command::Sweep { grid, out } => sweep(&grid, &out),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn gen_data(spec: &Path, out: &Path) -> Result<()> {
    let spec: TaskSpec = read_toml(spec)?;
    spec.validate("")?;
    create_dir(out)?;
    let m = generate(&spec, out)?;
    log::info!(
        "wrote {} train and {} test images to {}",
        m.count(Split::Train),
        m.count(Split::Test),
        out.display()
    );
    Ok(())
}

fn train(config: &Path, out: &Path) -> Result<()> {
    let cfg = RunConfig::from_file(config)?;
    let data = Dataset::load(&cfg.data)?;
    let (ckpt_dir, report_dir) = (out.join("checkpoints"), out.join("reports"));
    create_dir(&ckpt_dir)?;
    create_dir(&report_dir)?;
    let mut rows = Vec::new();
    let mut diverged = 0;
    for &seed in &cfg.seeds {
        let (report, net) = run_cell(&cfg, &data, seed)?;
        if let Some(net) = net {
            net.save(seed, &ckpt_dir.join(&report.run_id))?;
        }
        if report.status == CellStatus::Diverged {
            diverged += 1;
        }
        log::info!("{} {:?} in {:.1}s", report.run_id, report.status, report.wall_time_s);
        write_json(&report, &report_dir.join(format!("{}.json", report.run_id)))?;
        rows.push(ResultRow::from_report(&report));
    }
    write_rows(&rows, &out.join("results.csv"))?;
    if diverged > 0 {
        anyhow::bail!("{diverged} cell(s) diverged");
    }
    Ok(())
}

fn load(checkpoint: &Path, manifest: &Path) -> Result<(AnyNet, DatasetManifest)> {
    let (net, _) = AnyNet::load(checkpoint)
        .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    let m = DatasetManifest::read(manifest)?;
    Ok((net, m))
}

fn eval_checkpoint(
    checkpoint: &Path,
    manifest: &Path,
    split: Split,
    post: bool,
    cfg: &EvalConfig,
    out: Option<&Path>,
) -> Result<()> {
    let (net, m) = load(checkpoint, manifest)?;
    let images = m.load_split(split)?;
    let report = asymseg::harness::evaluate(&net, &images, cfg)?;
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["image", "dsc", "sen", "prc", "spc", "fbeta", "hd95", "components"])?;
    let records = m.split(split).collect::<Vec<_>>();
    for (rec, e) in records.iter().zip(&report.images) {
        let (s, comps) = if post {
            (&e.post, e.post_components)
        } else {
            (&e.raw, e.raw_components)
        };
        let hd = s.hd95.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([
            rec.image.clone(),
            s.dsc.to_string(),
            s.sensitivity.to_string(),
            s.precision.to_string(),
            s.specificity.to_string(),
            s.fbeta.to_string(),
            hd,
            comps.to_string(),
        ])?;
    }
    w.flush()?;
    let mean = if post { report.post } else { report.raw };
    log::info!(
        "mean over {} images: dsc {:.4} sen {:.4} prc {:.4} spc {:.5}",
        report.images.len(),
        mean.dsc,
        mean.sensitivity,
        mean.precision,
        mean.specificity
    );
    Ok(())
}

fn diagnose(checkpoint: &Path, manifest: &Path, out: &Path, cap: usize, seed: u64) -> Result<()> {
    let (net, m) = load(checkpoint, manifest)?;
    let cfg = EvalConfig {
        cap,
        ..EvalConfig::default()
    };
    let report = net.diagnose(&m.load_split(Split::Train)?, &m.load_split(Split::Test)?, &cfg, seed)?;
    create_dir(out)?;
    write_json(&report, &out.join("shift.json"))?;
    export_histograms(&report, &out.join("histograms.csv"))?;
    for c in &report.classes {
        log::info!(
            "class {}: z_hat train {:.3} test {:.3}, delta_z {:.3}, crossing {:.4} -> {:.4}",
            c.class,
            c.train.z_hat,
            c.test.z_hat,
            c.delta_z,
            c.train.crossing_rate,
            c.test.crossing_rate
        );
    }
    Ok(())
}

fn sweep(grid: &Path, out: &Path) -> Result<()> {
    let grid = SweepGrid::from_file(grid)?;
    create_dir(out)?;
    let outcome = run_sweep(&grid, Some(out))?;
    log::info!("{} cells written to {}", outcome.rows.len(), out.join("sweep.csv").display());
    let diverged = outcome.reports.iter().filter(|r| r.status == CellStatus::Diverged).count();
    if diverged > 0 {
        anyhow::bail!("{diverged} cell(s) diverged");
    }
    Ok(())
}
