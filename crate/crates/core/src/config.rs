//! Training hyperparameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gates::{AnnealSchedule, DEFAULT_ALPHA, DEFAULT_HARD_SWITCH_TOL};
use crate::kmeans::KmeansConfig;

/// Which loss terms are active after warmup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    Full,
    /// Drop the clustering term once warmup ends.
    NoCl,
    /// Never add the KL term.
    NoKl,
}

impl std::str::FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Ablation::Full),
            "no_cl" | "no-cl" => Ok(Ablation::NoCl),
            "no_kl" | "no-kl" => Ok(Ablation::NoKl),
            other => Err(Error::Config(format!("unknown ablation mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Number of clusters.
    pub k: usize,
    /// Single-feature shape functions.
    pub num_single: usize,
    /// Pairwise shape functions.
    pub num_pair: usize,
    /// Backbone output width (number of basis functions).
    pub basis: usize,
    /// Width of both hidden layers.
    pub hidden: usize,
    /// Fuzziness exponent.
    pub m: f64,
    /// KL weight.
    pub gamma: f64,
    /// Entmax α used by the selection gates.
    pub alpha: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub warmup_epochs: usize,
    /// Tempering epochs per gate bank.
    pub temper_epochs: usize,
    /// Total epochs; defaults to 1000, plus one tempering budget when pair
    /// gates are present.
    pub total_epochs: Option<usize>,
    /// Fixed annealing factor; derived from `temper_epochs` when absent.
    pub epsilon: Option<f64>,
    pub hard_switch_tol: f64,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub min_lr: f64,
    pub seeds: Vec<u64>,
    pub ablation: Ablation,
    pub kmeans: KmeansConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k: 2,
            num_single: 1,
            num_pair: 0,
            basis: 64,
            hidden: 256,
            m: 1.05,
            gamma: 1.0,
            alpha: DEFAULT_ALPHA,
            lr: 0.002,
            batch_size: 512,
            warmup_epochs: 400,
            temper_epochs: 100,
            total_epochs: None,
            epsilon: None,
            hard_switch_tol: DEFAULT_HARD_SWITCH_TOL,
            plateau_patience: 100,
            plateau_factor: 0.5,
            min_lr: 1e-6,
            seeds: vec![0, 1, 2, 3, 4],
            ablation: Ablation::Full,
            kmeans: KmeansConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Fuzziness used for text-style embeddings, where 1.05 collapses
    /// clusters.
    pub const TEXT_M: f64 = 1.025;

    pub fn total_epochs(&self) -> usize {
        self.total_epochs.unwrap_or(if self.num_pair > 0 {
            1000 + self.temper_epochs
        } else {
            1000
        })
    }

    pub fn schedule(&self) -> AnnealSchedule {
        AnnealSchedule {
            warmup_epochs: self.warmup_epochs,
            temper_epochs_single: self.temper_epochs,
            temper_epochs_pair: self.temper_epochs,
            epsilon: self.epsilon,
            hard_switch_tol: self.hard_switch_tol,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.k < 2 {
            return bad(format!("k must be at least 2, got {}", self.k));
        }
        if self.num_single + self.num_pair == 0 {
            return bad("at least one single or pair gate is required".into());
        }
        if self.basis == 0 || self.hidden == 0 || self.batch_size == 0 {
            return bad("basis, hidden and batch_size must be positive".into());
        }
        if !(self.m >= 1.0) {
            return bad(format!("m must be >= 1, got {}", self.m));
        }
        if !(self.gamma >= 0.0) {
            return bad(format!("gamma must be >= 0, got {}", self.gamma));
        }
        if !(self.alpha > 1.0) {
            return bad(format!("entmax alpha must be > 1, got {}", self.alpha));
        }
        if !(self.lr > 0.0) || !(self.min_lr > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return bad("plateau_factor must lie in (0,1)".into());
        }
        if self.warmup_epochs == 0 {
            return bad("warmup_epochs must be at least 1".into());
        }
        let total = self.total_epochs();
        if total < self.warmup_epochs {
            return bad(format!(
                "total epochs {total} is shorter than warmup {}",
                self.warmup_epochs
            ));
        }
        if total > self.warmup_epochs {
            let banks = usize::from(self.num_single > 0) + usize::from(self.num_pair > 0);
            let span = self.warmup_epochs + banks * self.temper_epochs;
            if span > total {
                return bad(format!(
                    "warmup plus tempering ({span} epochs) exceeds total epochs {total}"
                ));
            }
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        self.schedule().validate()?;
        Ok(())
    }

    /// Copy of this config with the ablation applied.
    pub fn with_ablation(&self, mode: Ablation) -> TrainConfig {
        let mut cfg = self.clone();
        cfg.ablation = mode;
        if mode == Ablation::NoKl {
            cfg.gamma = 0.0;
        }
        cfg
    }

    /// Weight on the KL term; zero during warmup and under the no-KL
    /// ablation.
    pub fn kl_weight(&self, after_warmup: bool) -> f64 {
        if after_warmup && self.ablation != Ablation::NoKl {
            self.gamma
        } else {
            0.0
        }
    }

    /// Weight on the clustering term for an epoch past warmup or not.
    pub fn clustering_weight(&self, after_warmup: bool) -> f64 {
        if after_warmup && self.ablation == Ablation::NoCl {
            0.0
        } else {
            1.0
        }
    }
}

/// `ablation_mode(cfg, mode)`.
pub fn ablation_mode(cfg: &TrainConfig, mode: Ablation) -> TrainConfig {
    cfg.with_ablation(mode)
}
