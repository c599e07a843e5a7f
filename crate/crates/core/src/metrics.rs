//! External agreement metrics between two hard labelings, plus the
//! normalized inertia of a trained model.

use std::collections::{BTreeMap, BTreeSet};

use crate::data::DualDataset;
use crate::error::{Error, Result};
use crate::kmeans;
use crate::model::ModelState;

/// Two labelings of the same points and their contingency table.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPair {
    labels_a: Vec<usize>,
    labels_b: Vec<usize>,
    /// `rows = distinct labels of a`, `cols = distinct labels of b`.
    contingency: Vec<Vec<u64>>,
}

impl PartitionPair {
    pub fn new(labels_a: &[usize], labels_b: &[usize]) -> Result<Self> {
        if labels_a.len() != labels_b.len() {
            return Err(Error::Input(format!(
                "partitions have different lengths: {} and {}",
                labels_a.len(),
                labels_b.len()
            )));
        }
        // dense ids in ascending label order
        let index = |labels: &[usize]| -> BTreeMap<usize, usize> {
            let set: BTreeSet<usize> = labels.iter().copied().collect();
            set.into_iter().enumerate().map(|(i, l)| (l, i)).collect()
        };
        let ia = index(labels_a);
        let ib = index(labels_b);
        let mut contingency = vec![vec![0u64; ib.len()]; ia.len()];
        for (a, b) in labels_a.iter().zip(labels_b) {
            contingency[ia[a]][ib[b]] += 1;
        }
        Ok(PartitionPair {
            labels_a: labels_a.to_vec(),
            labels_b: labels_b.to_vec(),
            contingency,
        })
    }

    pub fn len(&self) -> usize {
        self.labels_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels_a.is_empty()
    }

    pub fn labels_a(&self) -> &[usize] {
        &self.labels_a
    }

    pub fn labels_b(&self) -> &[usize] {
        &self.labels_b
    }

    pub fn contingency(&self) -> &[Vec<u64>] {
        &self.contingency
    }

    fn row_sums(&self) -> Vec<u64> {
        self.contingency.iter().map(|r| r.iter().sum()).collect()
    }

    fn col_sums(&self) -> Vec<u64> {
        let cols = self.contingency.first().map_or(0, Vec::len);
        (0..cols).map(|j| self.contingency.iter().map(|r| r[j]).sum()).collect()
    }
}

fn comb2(n: u64) -> f64 {
    (n as f64) * (n as f64 - 1.0) / 2.0
}

/// Fraction of point pairs on which both labelings agree (same/different).
pub fn rand_index(p: &PartitionPair) -> f64 {
    let n = p.len() as u64;
    if n < 2 {
        return 1.0;
    }
    let total = comb2(n);
    let sum_ij: f64 = p.contingency.iter().flatten().map(|&c| comb2(c)).sum();
    let sum_a: f64 = p.row_sums().into_iter().map(comb2).sum();
    let sum_b: f64 = p.col_sums().into_iter().map(comb2).sum();
    // agreements = together in both + apart in both
    (total + 2.0 * sum_ij - sum_a - sum_b) / total
}

pub fn adjusted_rand(p: &PartitionPair) -> f64 {
    let n = p.len() as u64;
    let sum_ij: f64 = p.contingency.iter().flatten().map(|&c| comb2(c)).sum();
    let sum_a: f64 = p.row_sums().into_iter().map(comb2).sum();
    let sum_b: f64 = p.col_sums().into_iter().map(comb2).sum();
    let total = comb2(n);
    let expected = if total > 0.0 { sum_a * sum_b / total } else { 0.0 };
    let max = 0.5 * (sum_a + sum_b);
    let denom = max - expected;
    if denom == 0.0 {
        return if is_permutation(&p.contingency) { 1.0 } else { 0.0 };
    }
    (sum_ij - expected) / denom
}

/// Every row and column has at most one non-zero cell.
fn is_permutation(table: &[Vec<u64>]) -> bool {
    let rows_ok = table.iter().all(|r| r.iter().filter(|&&c| c > 0).count() <= 1);
    let cols = table.first().map_or(0, Vec::len);
    let cols_ok = (0..cols).all(|j| table.iter().filter(|r| r[j] > 0).count() <= 1);
    rows_ok && cols_ok
}

fn entropy(counts: &[u64], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let q = c as f64 / n;
            -q * q.ln()
        })
        .sum()
}

/// Mutual information normalized by the arithmetic mean of the entropies.
pub fn nmi(p: &PartitionPair) -> f64 {
    if p.is_empty() {
        return 1.0;
    }
    let n = p.len() as f64;
    let ra = p.row_sums();
    let cb = p.col_sums();
    let mut mi = 0.0;
    for (i, row) in p.contingency.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (n * c / (ra[i] as f64 * cb[j] as f64)).ln();
            }
        }
    }
    let h = 0.5 * (entropy(&ra, n) + entropy(&cb, n));
    if h == 0.0 {
        return 1.0;
    }
    (mi / h).clamp(0.0, 1.0)
}

/// Best accuracy over one-to-one matchings of clusters to classes.
pub fn unsup_accuracy(p: &PartitionPair) -> f64 {
    if p.is_empty() {
        return 1.0;
    }
    let rows = p.contingency.len();
    let cols = p.contingency.first().map_or(0, Vec::len);
    let size = rows.max(cols);
    let mut cost = vec![vec![0.0; size]; size];
    for (i, row) in p.contingency.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            cost[i][j] = -(c as f64);
        }
    }
    let assignment = hungarian(&cost);
    let matched: u64 = assignment
        .iter()
        .enumerate()
        .filter(|&(i, &j)| i < rows && j < cols)
        .map(|(i, &j)| p.contingency[i][j])
        .sum();
    matched as f64 / p.len() as f64
}

/// Minimum-cost perfect matching on a square cost matrix. Returns the column
/// assigned to each row.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based potentials, column 0 is the virtual start
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        out[p[j] - 1] = j - 1;
    }
    out
}

/// Normalized inertia of the model's hard assignments against its own
/// centroids, measured in the transformed space.
pub fn normalized_inertia(dataset: &DualDataset, model: &ModelState) -> Result<f64> {
    let labels = model.predict_batch(dataset.x_interp())?;
    let x_t = dataset.x_transformed();
    if x_t.cols() != model.r {
        return Err(Error::shape("normalized_inertia", model.r, x_t.cols()));
    }
    Ok(kmeans::normalized_inertia(x_t, model.centroid_matrix(), Some(&labels)))
}

/// Indices of the `k` largest scores, ties broken by lower index.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Size of the overlap between the top-`k` items of two score lists.
pub fn top_k_intersection(a: &[f64], b: &[f64], k: usize) -> usize {
    let ta = top_k(a, k);
    let tb = top_k(b, k);
    ta.iter().filter(|i| tb.contains(i)).count()
}
