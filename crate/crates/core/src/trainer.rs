//! Two-phase training loop and multi-seed model selection.
//!
//! Epochs are numbered from 1. Epochs up to and including `warmup_epochs`
//! optimize the clustering loss alone with soft gates; the full parameter set
//! is snapshotted at the start of epoch `warmup_epochs`, and every later epoch
//! adds `γ·KL(w*‖w)` with `w*` from that snapshot. From the end of epoch
//! `warmup_epochs` onwards the gate temperatures are annealed, pair gates
//! first.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::data::{make_epoch_batches, BatchPlan, DualDataset};
use crate::error::{Error, Result};
use crate::gates::{anneal_step, Bank};
use crate::kmeans::{mbk_fit, normalized_inertia as kmeans_normalized_inertia, KmeansConfig};
use crate::metrics::normalized_inertia;
use crate::model::{init_model, ModelState};
use crate::objectives::{batch_objective, BatchOutcome, Phase};
use crate::optim::{AdamState, PlateauScheduler};
use crate::tensor::Matrix;

/// Rows per parallel work item inside a batch.
const CHUNK_ROWS: usize = 128;

/// Consecutive epochs a cluster may carry almost no fuzzy mass before a
/// warning is logged.
const DEGENERATE_EPOCHS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Per-sample means over the epoch.
    pub clustering: f64,
    pub kl: f64,
    pub total: f64,
    pub lr: f64,
    pub temp_single: f64,
    pub temp_pair: f64,
    pub hard_single: bool,
    pub hard_pair: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub final_temp_single: f64,
    pub final_temp_pair: f64,
    pub selected_single: Vec<usize>,
    pub selected_pair: Vec<(usize, usize)>,
    /// Set when training ended with a soft bank that had to be switched to
    /// argmax selection.
    pub forced_hard_switch: bool,
    /// Normalized inertia of the k-means initialization.
    pub kmeans_inertia: f64,
    /// Normalized inertia of the final hard clustering.
    pub final_inertia: f64,
    pub wall_time_secs: f64,
}

/// Hooks into the training loop.
pub trait TrainObserver {
    fn on_epoch_end(
        &mut self,
        _record: &EpochRecord,
        _model: &ModelState,
        _snapshot: Option<&ModelState>,
    ) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

/// Trains one model with the given seed.
pub fn fit(dataset: &DualDataset, cfg: &TrainConfig, seed: u64) -> Result<(ModelState, TrainReport)> {
    fit_observed(dataset, cfg, seed, &mut ())
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (epoch as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9)
}

/// Loss and summed gradients over one batch, evaluated in row chunks.
fn batch_step(
    model: &ModelState,
    snapshot: Option<&ModelState>,
    x: &Matrix,
    x_t: &Matrix,
    cfg: &TrainConfig,
    phase: Phase,
) -> Result<BatchOutcome> {
    let idx: Vec<usize> = (0..x.rows()).collect();
    let parts: Vec<Result<BatchOutcome>> = idx
        .par_chunks(CHUNK_ROWS)
        .map(|rows| batch_objective(model, snapshot, &x.select_rows(rows), &x_t.select_rows(rows), cfg, phase))
        .collect();
    // summed in chunk order so results do not depend on scheduling
    let mut parts = parts.into_iter();
    let mut acc = parts.next().expect("non-empty batch")?;
    for part in parts {
        acc.merge(&part?);
    }
    Ok(acc)
}

pub fn fit_observed(
    dataset: &DualDataset,
    cfg: &TrainConfig,
    seed: u64,
    observer: &mut dyn TrainObserver,
) -> Result<(ModelState, TrainReport)> {
    cfg.validate()?;
    let started = Instant::now();
    let n = dataset.len();
    let x_t = dataset.x_transformed();

    let km_cfg = KmeansConfig {
        k: cfg.k,
        seed,
        ..cfg.kmeans.clone()
    };
    let km = mbk_fit(x_t, &km_cfg)?;
    let kmeans_inertia = kmeans_normalized_inertia(x_t, &km.centroids, None);
    let mut model = init_model(cfg, dataset.num_features(), seed, &km.centroids)?;

    let schedule = cfg.schedule();
    let total_epochs = cfg.total_epochs();
    let mut adam = AdamState::new(&model.params, cfg.lr);
    let mut plateau = PlateauScheduler::new(cfg.plateau_patience, cfg.plateau_factor, cfg.min_lr);
    let mut snapshot: Option<ModelState> = None;
    let mut records = Vec::with_capacity(total_epochs);
    let mut starved = vec![0usize; cfg.k];

    for epoch in 1..=total_epochs {
        if epoch == cfg.warmup_epochs {
            snapshot = Some(model.clone());
        }
        let phase = if epoch > cfg.warmup_epochs {
            Phase::Anneal
        } else {
            Phase::Warmup
        };
        let snap = match phase {
            Phase::Anneal => snapshot.as_ref(),
            Phase::Warmup => None,
        };
        let plan = BatchPlan::new(n, cfg.batch_size, epoch_seed(seed, epoch));
        let (mut clust, mut kl, mut total) = (0.0, 0.0, 0.0);
        let mut mass = vec![0.0; cfg.k];
        for batch in make_epoch_batches(n, &plan) {
            let (xb, xtb) = dataset.batch(batch);
            let out = batch_step(&model, snap, &xb, &xtb, cfg, phase)?;
            let b = out.breakdown;
            if !b.clustering.is_finite() {
                return Err(Error::Numeric(format!("epoch {epoch}: clustering loss is not finite")));
            }
            if !b.kl.is_finite() {
                return Err(Error::Numeric(format!("epoch {epoch}: KL term is not finite")));
            }
            if !out.grads.is_finite() {
                return Err(Error::Numeric(format!("epoch {epoch}: gradient is not finite")));
            }
            clust += b.clustering;
            kl += b.kl;
            total += b.total;
            for (m, v) in mass.iter_mut().zip(&out.cluster_mass) {
                *m += v;
            }
            let frozen = model.frozen_params();
            adam.step(&mut model.params, &out.grads, &frozen)?;
        }

        let nf = n as f64;
        adam.lr = plateau.step(total / nf, adam.lr);
        for (s, m) in starved.iter_mut().zip(&mass) {
            *s = if *m < 1e-6 * nf { *s + 1 } else { 0 };
        }
        if let Some(c) = starved.iter().position(|&s| s == DEGENERATE_EPOCHS) {
            log::warn!("cluster {c} has had almost no fuzzy mass for {DEGENERATE_EPOCHS} epochs (epoch {epoch})");
        }

        if epoch >= cfg.warmup_epochs && epoch < total_epochs {
            let event = anneal_step(&mut model.gates, &model.params, &schedule, epoch);
            if let Some(bank) = event.switched {
                log::debug!("epoch {epoch}: {bank:?} gates switched to hard selection");
            }
        }

        let record = EpochRecord {
            epoch,
            clustering: clust / nf,
            kl: kl / nf,
            total: total / nf,
            lr: adam.lr,
            temp_single: model.gates.temp_single,
            temp_pair: model.gates.temp_pair,
            hard_single: model.gates.hard_single,
            hard_pair: model.gates.hard_pair,
        };
        log::trace!("{record:?}");
        observer.on_epoch_end(&record, &model, snapshot.as_ref())?;
        records.push(record);
    }

    let mut forced = false;
    if total_epochs > cfg.warmup_epochs && !model.gates.is_valid_gam() {
        log::warn!("gates were still soft after {total_epochs} epochs; switching to argmax selection");
        model.gates.force_hard();
        forced = true;
    }

    let final_inertia = normalized_inertia(dataset, &model)?;
    let pair_sel = model.gates.selected_features(&model.params, Bank::Pair);
    let report = TrainReport {
        seed,
        epochs: records,
        final_temp_single: model.gates.temp_single,
        final_temp_pair: model.gates.temp_pair,
        selected_single: model.gates.selected_features(&model.params, Bank::Single),
        selected_pair: pair_sel.chunks(2).map(|p| (p[0], p[1])).collect(),
        forced_hard_switch: forced,
        kmeans_inertia,
        final_inertia,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}

/// Result of training over several seeds.
#[derive(Debug, Clone)]
pub struct MultiSeedFit {
    pub best: ModelState,
    pub best_index: usize,
    pub reports: Vec<TrainReport>,
}

impl MultiSeedFit {
    pub fn best_report(&self) -> &TrainReport {
        &self.reports[self.best_index]
    }
}

/// Index of the smallest inertia, first one on ties.
pub fn select_min_inertia(inertias: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in inertias.iter().enumerate() {
        if v < inertias[best] {
            best = i;
        }
    }
    best
}

/// Trains one model per configured seed and keeps the one with the lowest
/// normalized inertia.
pub fn fit_multi_seed(dataset: &DualDataset, cfg: &TrainConfig) -> Result<MultiSeedFit> {
    fit_multi_seed_observed(dataset, cfg, |_| Box::new(()))
}

/// As [`fit_multi_seed`], with one observer per seed built by `observer`.
pub fn fit_multi_seed_observed<F>(dataset: &DualDataset, cfg: &TrainConfig, observer: F) -> Result<MultiSeedFit>
where
    F: Fn(u64) -> Box<dyn TrainObserver + Send> + Sync,
{
    cfg.validate()?;
    if cfg.seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let runs: Vec<Result<(ModelState, TrainReport)>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| fit_observed(dataset, cfg, seed, observer(seed).as_mut()))
        .collect();
    let mut models = Vec::with_capacity(runs.len());
    let mut reports = Vec::with_capacity(runs.len());
    for run in runs {
        let (m, r) = run?;
        models.push(m);
        reports.push(r);
    }
    let inertias: Vec<f64> = reports.iter().map(|r| r.final_inertia).collect();
    let best_index = select_min_inertia(&inertias);
    let best = models.swap_remove(best_index);
    Ok(MultiSeedFit {
        best,
        best_index,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::gaussian_blobs;

    #[test]
    fn min_inertia_selection() {
        assert_eq!(select_min_inertia(&[3.1]), 0);
        assert_eq!(select_min_inertia(&[3.1, 2.7, 2.9]), 1);
        assert_eq!(select_min_inertia(&[1.0, 1.0]), 0);
    }

    #[test]
    fn epoch_seeds_differ() {
        assert_ne!(epoch_seed(0, 1), epoch_seed(0, 2));
        assert_ne!(epoch_seed(1, 1), epoch_seed(2, 1));
    }

    #[test]
    fn pure_warmup_run_keeps_soft_gates() {
        let (x, _) = gaussian_blobs(60, 3, 2, 6.0, 0);
        let ds = DualDataset::single(x, None, None).unwrap();
        let cfg = TrainConfig {
            k: 2,
            num_single: 2,
            hidden: 8,
            basis: 4,
            batch_size: 32,
            warmup_epochs: 5,
            total_epochs: Some(5),
            ..TrainConfig::default()
        };
        let (model, report) = fit(&ds, &cfg, 0).unwrap();
        assert_eq!(report.epochs.len(), 5);
        assert!(report.epochs.iter().all(|e| e.kl == 0.0 && e.temp_single == 1.0));
        assert!(!model.gates.hard_single);
        assert!(!report.forced_hard_switch);
    }

    fn small() -> (DualDataset, TrainConfig) {
        let (x, _) = gaussian_blobs(120, 3, 3, 6.0, 4);
        let ds = DualDataset::single(x, None, None).unwrap();
        let cfg = TrainConfig {
            k: 3,
            num_single: 3,
            num_pair: 1,
            hidden: 8,
            basis: 4,
            batch_size: 40,
            warmup_epochs: 6,
            temper_epochs: 4,
            total_epochs: Some(16),
            seeds: vec![0, 1, 2],
            ..TrainConfig::default()
        };
        (ds, cfg)
    }

    #[test]
    fn same_seed_same_model() {
        let (ds, cfg) = small();
        let (a, ra) = fit(&ds, &cfg, 5).unwrap();
        let (b, rb) = fit(&ds, &cfg, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.epochs, rb.epochs);
        let (c, _) = fit(&ds, &cfg, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn full_schedule_ends_hard_with_kl_after_warmup() {
        let (ds, cfg) = small();
        let (model, report) = fit(&ds, &cfg, 0).unwrap();
        assert_eq!(report.epochs.len(), 16);
        assert!(model.gates.hard_single && model.gates.hard_pair);
        assert_eq!(report.selected_single.len(), 3);
        assert_eq!(report.selected_pair.len(), 1);
        for e in &report.epochs {
            // the first anneal step closes the last warmup epoch
            if e.epoch < cfg.warmup_epochs {
                assert_eq!(e.temp_single, 1.0);
                assert_eq!(e.temp_pair, 1.0);
            }
            if e.epoch <= cfg.warmup_epochs {
                assert_eq!(e.kl, 0.0, "epoch {}", e.epoch);
            } else {
                assert!(e.kl >= 0.0);
            }
            assert!(e.total.is_finite());
        }
        // temperatures never rise
        for w in report.epochs.windows(2) {
            assert!(w[1].temp_single <= w[0].temp_single);
            assert!(w[1].temp_pair <= w[0].temp_pair);
        }
    }

    #[test]
    fn multi_seed_keeps_lowest_inertia() {
        let (ds, cfg) = small();
        let fitted = fit_multi_seed(&ds, &cfg).unwrap();
        assert_eq!(fitted.reports.len(), 3);
        let seeds: Vec<u64> = fitted.reports.iter().map(|r| r.seed).collect();
        assert_eq!(seeds, cfg.seeds);
        let best = fitted.best_report().final_inertia;
        assert!(fitted.reports.iter().all(|r| best <= r.final_inertia));
        let (alone, _) = fit(&ds, &cfg, fitted.best_report().seed).unwrap();
        assert_eq!(alone, fitted.best);

        let empty = TrainConfig { seeds: vec![], ..cfg };
        assert!(matches!(fit_multi_seed(&ds, &empty), Err(Error::Config(_))));
    }

    #[test]
    fn observer_sees_every_epoch_and_snapshot_after_warmup() {
        use std::sync::{Arc, Mutex};

        struct Log(Arc<Mutex<Vec<(u64, usize, bool)>>>, u64);
        impl TrainObserver for Log {
            fn on_epoch_end(&mut self, r: &EpochRecord, _m: &ModelState, snap: Option<&ModelState>) -> Result<()> {
                self.0.lock().unwrap().push((self.1, r.epoch, snap.is_some()));
                Ok(())
            }
        }

        let (ds, cfg) = small();
        let seen = Arc::new(Mutex::new(Vec::new()));
        let handle = seen.clone();
        fit_multi_seed_observed(&ds, &cfg, move |seed| Box::new(Log(handle.clone(), seed))).unwrap();
        let seen = seen.lock().unwrap();
        assert_eq!(seen.len(), 3 * 16);
        for &(_, epoch, has_snapshot) in seen.iter() {
            assert_eq!(has_snapshot, epoch >= cfg.warmup_epochs, "epoch {epoch}");
        }
    }
}
