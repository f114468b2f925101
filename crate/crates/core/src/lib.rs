//! Class-imbalance losses, asymmetric regularizers, a small reverse-mode
//! segmentation network, evaluation metrics and logit-shift diagnostics,
//! plus the synthetic-data experiment harness built on top of them.

pub mod autodiff;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod harness;
pub mod losses;
pub mod metrics;
pub mod numeric;
pub mod regularizers;
pub mod seed;

pub use error::{Error, Result};
pub use field::{LabelField, LogitField};
pub use numeric::Rarity;
