//! Interpretable fuzzy clustering with a gated neural additive model.
//!
//! Each cluster logit is a sum of small shape functions of single input
//! features (and optionally feature pairs). Which feature feeds each shape
//! function is learned through entmax gates that are annealed to one-hot
//! selections, so the trained model is an additive model whose shape graphs
//! can be read off directly. Clustering happens in a separate, possibly
//! richer, representation of the same points.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data;
pub mod error;
pub mod explain;
pub mod gates;
pub mod kmeans;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod optim;
pub mod persist;
pub mod synth;
pub mod tensor;
pub mod trainer;

pub use config::{Ablation, TrainConfig};
pub use data::{DualDataset, ScalerStats};
pub use error::{Error, Result};
pub use explain::{ShapeGraphSet, explain, export_dir, extract_shapes, mean_center, purify};
pub use gates::{AnnealSchedule, Bank, GateBank};
pub use kmeans::{KmeansConfig, KmeansFit, mbk_fit};
pub use metrics::{PartitionPair, adjusted_rand, nmi, unsup_accuracy};
pub use model::{ModelState, assign, cluster_logits, predict_hard};
pub use persist::PersistedModel;
pub use tensor::Matrix;
pub use trainer::{MultiSeedFit, TrainReport, fit, fit_multi_seed};
