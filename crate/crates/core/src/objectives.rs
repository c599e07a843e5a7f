//! Fuzzy clustering loss in the transformed space, the KL self-supervision
//! term, and their combined gradient.

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::model::ModelState;
use crate::tensor::{sq_dist, GradTape, Matrix};

/// Lower clamp applied to `w` inside the KL logarithm.
pub const KL_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Warmup,
    Anneal,
}

/// Loss values for one batch (plain sums over the batch).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub clustering: f64,
    pub kl: f64,
    /// `clustering_weight · clustering + gamma · kl`.
    pub total: f64,
    pub m: f64,
    pub gamma: f64,
    /// 1 unless the clustering term is ablated after warmup.
    pub clustering_weight: f64,
}

/// `Σₙ Σₖ wₙₖ^m ‖x̃ₙ − z̃ₖ‖²`.
pub fn clustering_loss(w: &Matrix, x_t: &Matrix, z: &Matrix, m: f64) -> f64 {
    let mut total = 0.0;
    for n in 0..w.rows() {
        let xn = x_t.row(n);
        for (k, &wk) in w.row(n).iter().enumerate() {
            if wk > 0.0 {
                total += wk.powf(m) * sq_dist(xn, z.row(k));
            }
        }
    }
    total
}

/// `Σₙ Σₖ w*ₙₖ log(w*ₙₖ / wₙₖ)`, with `w` clamped below at [`KL_CLAMP`].
pub fn kl_regularizer(w_star: &Matrix, w: &Matrix) -> f64 {
    let mut total = 0.0;
    for (&p, &q) in w_star.data().iter().zip(w.data()) {
        if p > 0.0 {
            total += p * (p.ln() - q.max(KL_CLAMP).ln());
        }
    }
    total
}

/// Loss, gradients and per-cluster fuzzy mass for one batch.
#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub breakdown: LossBreakdown,
    pub grads: GradTape,
    /// `Σₙ wₙₖ` for each cluster.
    pub cluster_mass: Vec<f64>,
}

impl BatchOutcome {
    /// Adds another disjoint chunk of the same batch.
    pub fn merge(&mut self, other: &BatchOutcome) {
        self.breakdown.clustering += other.breakdown.clustering;
        self.breakdown.kl += other.breakdown.kl;
        self.breakdown.total += other.breakdown.total;
        self.grads.accumulate(&other.grads);
        for (a, b) in self.cluster_mass.iter_mut().zip(&other.cluster_mass) {
            *a += b;
        }
    }
}

/// Loss and gradients for one batch.
///
/// In the anneal phase the KL target comes from `snapshot`, evaluated with
/// its own (soft, `T = 1`) gates; the snapshot receives no gradient.
pub fn total_loss(
    model: &ModelState,
    snapshot: Option<&ModelState>,
    x: &Matrix,
    x_t: &Matrix,
    cfg: &TrainConfig,
    phase: Phase,
) -> Result<(LossBreakdown, GradTape)> {
    let out = batch_objective(model, snapshot, x, x_t, cfg, phase)?;
    Ok((out.breakdown, out.grads))
}

pub fn batch_objective(
    model: &ModelState,
    snapshot: Option<&ModelState>,
    x: &Matrix,
    x_t: &Matrix,
    cfg: &TrainConfig,
    phase: Phase,
) -> Result<BatchOutcome> {
    if x.rows() != x_t.rows() {
        return Err(Error::shape("total_loss", x.rows(), x_t.rows()));
    }
    if x_t.cols() != model.r {
        return Err(Error::shape("total_loss transformed input", model.r, x_t.cols()));
    }
    let w_star = match (phase, snapshot) {
        (Phase::Anneal, Some(s)) => Some(s.forward(x)?.weights),
        (Phase::Anneal, None) => {
            return Err(Error::State("anneal phase requires a warmup snapshot".into()))
        }
        (Phase::Warmup, Some(_)) => {
            return Err(Error::State("warmup phase must not use a snapshot".into()))
        }
        (Phase::Warmup, None) => None,
    };
    let after_warmup = phase == Phase::Anneal;
    let cw = cfg.clustering_weight(after_warmup);
    let gamma = cfg.kl_weight(after_warmup);

    let fwd = model.forward(x)?;
    let w = &fwd.weights;
    let z = model.centroid_matrix();
    let (n, k, m) = (x.rows(), model.k, cfg.m);

    let clustering = clustering_loss(w, x_t, z, m);
    let kl = w_star.as_ref().map_or(0.0, |ws| kl_regularizer(ws, w));

    let mut tape = GradTape::for_store(&model.params);
    let mut d_logits = Matrix::zeros(n, k);
    let mut d_z = Matrix::zeros(k, model.r);
    let mut a = vec![0.0; k];
    for r in 0..n {
        let wr = w.row(r);
        let xr = x_t.row(r);
        // a_k = w_k ∂L/∂w_k, which keeps the softmax backward finite when
        // some w_k underflow.
        for kk in 0..k {
            let wm = if wr[kk] > 0.0 { wr[kk].powf(m) } else { 0.0 };
            let zk = z.row(kk);
            a[kk] = cw * m * wm * sq_dist(xr, zk);
            if cw != 0.0 && wm != 0.0 {
                let scale = cw * 2.0 * wm;
                for (dz, (zv, xv)) in d_z.row_mut(kk).iter_mut().zip(zk.iter().zip(xr)) {
                    *dz += scale * (zv - xv);
                }
            }
            if let Some(ws) = &w_star {
                if wr[kk] > KL_CLAMP {
                    a[kk] -= gamma * ws.get(r, kk);
                }
            }
        }
        let sum_a: f64 = a.iter().sum();
        for (kk, dg) in d_logits.row_mut(r).iter_mut().enumerate() {
            *dg = a[kk] - wr[kk] * sum_a;
        }
    }
    model.backward(x, &fwd, &d_logits, &mut tape);
    tape.get_mut(model.centroids).data_mut().copy_from_slice(d_z.data());

    let mut cluster_mass = vec![0.0; k];
    for r in 0..n {
        for (acc, v) in cluster_mass.iter_mut().zip(w.row(r)) {
            *acc += v;
        }
    }
    let breakdown = LossBreakdown {
        clustering,
        kl,
        total: cw * clustering + gamma * kl,
        m,
        gamma,
        clustering_weight: cw,
    };
    Ok(BatchOutcome {
        breakdown,
        grads: tape,
        cluster_mass,
    })
}

/// Loss value only, for finite-difference checks and evaluation.
pub fn total_loss_value(
    model: &ModelState,
    snapshot: Option<&ModelState>,
    x: &Matrix,
    x_t: &Matrix,
    cfg: &TrainConfig,
    phase: Phase,
) -> Result<f64> {
    let w = model.forward(x)?.weights;
    let after_warmup = phase == Phase::Anneal;
    let mut total = cfg.clustering_weight(after_warmup)
        * clustering_loss(&w, x_t, model.centroid_matrix(), cfg.m);
    if after_warmup {
        let snap = snapshot.ok_or_else(|| Error::State("anneal phase requires a warmup snapshot".into()))?;
        total += cfg.kl_weight(true) * kl_regularizer(&snap.forward(x)?.weights, &w);
    }
    Ok(total)
}
