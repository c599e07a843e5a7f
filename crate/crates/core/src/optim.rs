//! Adam with plateau learning-rate decay.

use crate::error::{Error, Result};
use crate::tensor::{GradTape, Matrix, ParamId, ParamStore};

const IMPROVEMENT_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl AdamState {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros = || zeros_like(store);
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    /// One bias-corrected Adam update of every parameter not in `frozen`.
    /// Frozen parameters keep both their values and their moments.
    pub fn step(&mut self, store: &mut ParamStore, grads: &GradTape, frozen: &[ParamId]) -> Result<()> {
        if store.len() != self.first.len() {
            return Err(Error::State(format!(
                "optimizer tracks {} parameters, store has {}",
                self.first.len(),
                store.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for id in store.ids().collect::<Vec<_>>() {
            if frozen.contains(&id) {
                continue;
            }
            let g = grads.get(id);
            let p = store.get_mut(id);
            if g.shape() != p.shape() {
                return Err(Error::State(format!(
                    "gradient shape {:?} does not match parameter shape {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            let m = self.first[id.0].data_mut();
            let v = self.second[id.0].data_mut();
            for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

fn zeros_like(store: &ParamStore) -> Vec<Matrix> {
    store
        .ids()
        .map(|id| {
            let (r, c) = store.get(id).shape();
            Matrix::zeros(r, c)
        })
        .collect()
}

/// Halves (by `factor`) the learning rate after `patience` epochs without
/// improvement of the tracked loss.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    pub patience: usize,
    pub factor: f64,
    pub best_loss: f64,
    pub epochs_since_improve: usize,
    pub min_lr: f64,
}

impl PlateauScheduler {
    pub fn new(patience: usize, factor: f64, min_lr: f64) -> Self {
        PlateauScheduler {
            patience,
            factor,
            best_loss: f64::INFINITY,
            epochs_since_improve: 0,
            min_lr,
        }
    }

    /// Records one epoch loss and returns the learning rate to use next.
    pub fn step(&mut self, epoch_loss: f64, lr: f64) -> f64 {
        if epoch_loss < self.best_loss - IMPROVEMENT_EPS {
            self.best_loss = epoch_loss;
            self.epochs_since_improve = 0;
            return lr;
        }
        self.epochs_since_improve += 1;
        if self.epochs_since_improve >= self.patience {
            self.epochs_since_improve = 0;
            return (lr * self.factor).max(self.min_lr).min(lr);
        }
        lr
    }
}
