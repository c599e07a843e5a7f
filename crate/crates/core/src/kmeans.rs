//! Mini-batch k-means with k-means++ seeding, used to initialize centroids
//! and as the black-box baseline.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{sq_dist, Matrix};

/// Centers moving less than this for `patience` consecutive batches stop a
/// restart early.
const MOVE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KmeansConfig {
    /// Cluster count; the trainer overwrites it with its own `k`.
    pub k: usize,
    pub batch_size: usize,
    /// The seeding pool holds `init_sample_factor × batch_size` points.
    pub init_sample_factor: usize,
    pub n_init: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for KmeansConfig {
    fn default() -> Self {
        KmeansConfig {
            k: 2,
            batch_size: 512,
            init_sample_factor: 5,
            n_init: 5,
            max_epochs: 1000,
            patience: 10,
            seed: 0,
        }
    }
}

impl KmeansConfig {
    pub fn init_pool_size(&self, n: usize) -> usize {
        (self.init_sample_factor * self.batch_size).min(n)
    }
}

/// Per-restart diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartLog {
    pub seed_inertia: f64,
    pub final_inertia: f64,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmeansFit {
    /// `K × R`.
    pub centroids: Matrix,
    /// Unnormalized inertia of the returned centroids.
    pub inertia: f64,
    pub restarts: Vec<RestartLog>,
}

/// Closest centroid to `x`, lowest index on ties.
pub fn nearest_centroid(x: &[f64], z: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for k in 0..z.rows() {
        let d = sq_dist(x, z.row(k));
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// `Σₙ ‖xₙ − z_{aₙ}‖²`; without labels each point uses its nearest centroid.
pub fn inertia(x: &Matrix, z: &Matrix, assignments: Option<&[usize]>) -> f64 {
    match assignments {
        Some(a) => (0..x.rows()).map(|n| sq_dist(x.row(n), z.row(a[n]))).sum(),
        None => (0..x.rows()).map(|n| nearest_centroid(x.row(n), z).1).sum(),
    }
}

/// Inertia divided by the number of points.
pub fn normalized_inertia(x: &Matrix, z: &Matrix, assignments: Option<&[usize]>) -> f64 {
    inertia(x, z, assignments) / x.rows() as f64
}

pub fn assign_nearest(x: &Matrix, z: &Matrix) -> Vec<usize> {
    (0..x.rows()).map(|n| nearest_centroid(x.row(n), z).0).collect()
}

fn kmeans_pp(x: &Matrix, pool: &[usize], k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut chosen = Vec::with_capacity(k);
    chosen.push(pool[rng.random_range(0..pool.len())]);
    let mut d2: Vec<f64> = pool.iter().map(|&i| sq_dist(x.row(i), x.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut pick = None;
            for (j, &d) in d2.iter().enumerate() {
                if d > 0.0 {
                    if target < d {
                        pick = Some(j);
                        break;
                    }
                    target -= d;
                }
            }
            // rounding can leave target just past the last positive weight
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).expect("total > 0"))
        } else {
            rng.random_range(0..pool.len())
        };
        let c = pool[pick];
        chosen.push(c);
        for (j, &i) in pool.iter().enumerate() {
            d2[j] = d2[j].min(sq_dist(x.row(i), x.row(c)));
        }
    }
    x.select_rows(&chosen)
}

fn run_once(x: &Matrix, cfg: &KmeansConfig, rng: &mut ChaCha8Rng) -> (Matrix, f64, RestartLog) {
    let n = x.rows();
    let k = cfg.k;
    let pool = index::sample(rng, n, cfg.init_pool_size(n)).into_vec();
    let mut centers = kmeans_pp(x, &pool, k, rng);
    let seed_inertia = inertia(x, &centers, None);
    let mut best = (centers.clone(), seed_inertia);
    let mut counts = vec![0usize; k];
    let mut order: Vec<usize> = (0..n).collect();
    let mut calm = 0;
    let mut epochs = 0;
    'outer: for _ in 0..cfg.max_epochs {
        epochs += 1;
        order.shuffle(rng);
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let before = centers.clone();
            let assigned: Vec<(usize, f64)> = batch.iter().map(|&i| nearest_centroid(x.row(i), &centers)).collect();
            for (&i, &(c, _)) in batch.iter().zip(&assigned) {
                counts[c] += 1;
                let eta = 1.0 / counts[c] as f64;
                for (zv, xv) in centers.row_mut(c).iter_mut().zip(x.row(i)) {
                    *zv += eta * (xv - *zv);
                }
            }
            for c in 0..k {
                if counts[c] == 0 {
                    let (far, _) = batch
                        .iter()
                        .zip(&assigned)
                        .map(|(&i, &(_, d))| (i, d))
                        .fold((batch[0], f64::NEG_INFINITY), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
                    centers.row_mut(c).copy_from_slice(x.row(far));
                    counts[c] = 1;
                }
            }
            let shift = (0..k)
                .map(|c| sq_dist(centers.row(c), before.row(c)).sqrt())
                .fold(0.0, f64::max);
            calm = if shift < MOVE_TOL { calm + 1 } else { 0 };
            if calm >= cfg.patience {
                break 'outer;
            }
        }
        let current = inertia(x, &centers, None);
        if current < best.1 {
            best = (centers.clone(), current);
        }
    }
    let current = inertia(x, &centers, None);
    if current < best.1 {
        best = (centers, current);
    }
    let log = RestartLog {
        seed_inertia,
        final_inertia: best.1,
        epochs,
    };
    (best.0, best.1, log)
}

/// Best of `n_init` seeded restarts by final inertia.
pub fn mbk_fit(x: &Matrix, cfg: &KmeansConfig) -> Result<KmeansFit> {
    if cfg.k == 0 || x.rows() < cfg.k {
        return Err(Error::Config(format!(
            "mini-batch k-means needs at least k={} points, got {}",
            cfg.k,
            x.rows()
        )));
    }
    if cfg.n_init == 0 || cfg.batch_size == 0 {
        return Err(Error::Config("n_init and batch_size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(Matrix, f64)> = None;
    let mut restarts = Vec::with_capacity(cfg.n_init);
    for _ in 0..cfg.n_init {
        let (centers, value, log) = run_once(x, cfg, &mut rng);
        log::debug!(
            "k-means restart {}: seed inertia {:.6}, final {:.6}, {} epochs",
            restarts.len(),
            log.seed_inertia,
            log.final_inertia,
            log.epochs
        );
        restarts.push(log);
        if best.as_ref().is_none_or(|b| value < b.1) {
            best = Some((centers, value));
        }
    }
    let (centroids, inertia) = best.expect("n_init > 0");
    Ok(KmeansFit {
        centroids,
        inertia,
        restarts,
    })
}
