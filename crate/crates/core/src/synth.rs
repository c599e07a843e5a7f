//! Synthetic isotropic Gaussian blobs for tests, benchmarks and demos.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::tensor::{sq_dist, Matrix};

/// `n` points split evenly over the rows of `centers`, each drawn from
/// `N(center, sigma² I)`, in shuffled order.
pub fn gaussian_blobs_with_centers(centers: &Matrix, n: usize, sigma: f64, seed: u64) -> (Matrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (k, d) = centers.shape();
    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    labels.shuffle(&mut rng);
    let mut data = Vec::with_capacity(n * d);
    for &l in &labels {
        for &c in centers.row(l) {
            let e: f64 = StandardNormal.sample(&mut rng);
            data.push(c + sigma * e);
        }
    }
    (Matrix::from_vec(n, d, data).expect("n × d"), labels)
}

/// Random blob centers whose closest pair is exactly `separation` apart
/// (unit-variance blobs).
pub fn blob_centers(k: usize, d: usize, separation: f64, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_b10b);
    let data: Vec<f64> = (0..k * d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut centers = Matrix::from_vec(k, d, data).expect("k × d");
    let mut min = f64::INFINITY;
    for a in 0..k {
        for b in a + 1..k {
            min = min.min(sq_dist(centers.row(a), centers.row(b)).sqrt());
        }
    }
    if min.is_finite() && min > 0.0 {
        let s = separation / min;
        centers.data_mut().iter_mut().for_each(|v| *v *= s);
    }
    centers
}

/// `k` unit-variance blobs in `d` dimensions with minimum center distance
/// `separation`.
pub fn gaussian_blobs(n: usize, d: usize, k: usize, separation: f64, seed: u64) -> (Matrix, Vec<usize>) {
    let centers = blob_centers(k, d, separation, seed);
    gaussian_blobs_with_centers(&centers, n, 1.0, seed)
}
