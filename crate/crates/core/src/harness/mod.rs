//! Experiment orchestration: configuration files, training, evaluation,
//! diagnosis and multi-seed sweeps.

mod config;
mod eval;
mod run;
mod sweep;
mod train;

pub use config::{
    parse_toml, read_toml, DataSource, EvalConfig, ModelConfig, OptimizerConfig, Precision,
    RunConfig,
};
pub use eval::{diagnose, evaluate, evaluate_image, predict, AnyNet, EvalReport, ImageEval, ScoreSummary};
pub use run::{
    read_rows, run_cell, run_id, write_json, write_rows, CellStatus, Dataset, ResultRow, RunReport,
};
pub use sweep::{run_sweep, run_sweep_on, SweepBase, SweepGrid, SweepOutcome, Variant};
pub use train::{train, CurvePoint, RunSeeds, TrainOutcome, TrainStats};
