//! Loading, standardizing and batching the paired interpretable/transformed
//! data.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Raw stddev below this marks a column as constant.
const CONSTANT_STD: f64 = 1e-12;

/// Row-aligned interpretable (`N×D`) and transformed (`N×R`) views of the
/// same samples.
#[derive(Debug, Clone)]
pub struct DualDataset {
    x_interp: Matrix,
    x_transformed: Matrix,
    feature_names: Vec<String>,
    labels: Option<Vec<usize>>,
}

impl DualDataset {
    pub fn new(
        x_interp: Matrix,
        x_transformed: Matrix,
        feature_names: Option<Vec<String>>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let n = x_interp.rows();
        if n == 0 {
            return Err(Error::Input("dataset has no rows".into()));
        }
        if x_transformed.rows() != n {
            return Err(Error::shape(
                "DualDataset::new",
                format!("{n} transformed rows"),
                x_transformed.rows(),
            ));
        }
        let names = match feature_names {
            Some(names) => names,
            None => default_names(x_interp.cols()),
        };
        if names.len() != x_interp.cols() {
            return Err(Error::shape(
                "DualDataset::new",
                format!("{} feature names", x_interp.cols()),
                names.len(),
            ));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Input(format!("duplicate feature name {name:?}")));
            }
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::shape("DualDataset::new", format!("{n} labels"), l.len()));
            }
        }
        Ok(DualDataset {
            x_interp,
            x_transformed,
            feature_names: names,
            labels,
        })
    }

    /// Dataset whose transformed view is the interpretable one.
    pub fn single(x: Matrix, feature_names: Option<Vec<String>>, labels: Option<Vec<usize>>) -> Result<Self> {
        let xt = x.clone();
        Self::new(x, xt, feature_names, labels)
    }

    pub fn len(&self) -> usize {
        self.x_interp.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_features(&self) -> usize {
        self.x_interp.cols()
    }

    pub fn transformed_dim(&self) -> usize {
        self.x_transformed.cols()
    }

    pub fn x_interp(&self) -> &Matrix {
        &self.x_interp
    }

    pub fn x_transformed(&self) -> &Matrix {
        &self.x_transformed
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Both views restricted to `idx`, in that order.
    pub fn batch(&self, idx: &[usize]) -> (Matrix, Matrix) {
        (self.x_interp.select_rows(idx), self.x_transformed.select_rows(idx))
    }

    /// Standardizes the interpretable view, and the transformed view too when
    /// `transformed` is set.
    pub fn standardized(&self, transformed: bool) -> (DualDataset, ScalerStats, Option<ScalerStats>) {
        let (xi, si) = standardize(&self.x_interp);
        let (xt, st) = if transformed {
            let (m, s) = standardize(&self.x_transformed);
            (m, Some(s))
        } else {
            (self.x_transformed.clone(), None)
        };
        let ds = DualDataset {
            x_interp: xi,
            x_transformed: xt,
            feature_names: self.feature_names.clone(),
            labels: self.labels.clone(),
        };
        (ds, si, st)
    }
}

pub fn default_names(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("x{i}")).collect()
}

/// Per-column location and scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Columns whose raw stddev was below the constant threshold.
    pub constant: Vec<bool>,
}

impl ScalerStats {
    /// Applies the stored transform to new data.
    pub fn transform(&self, m: &Matrix) -> Result<Matrix> {
        if m.cols() != self.mean.len() {
            return Err(Error::shape("ScalerStats::transform", self.mean.len(), m.cols()));
        }
        let mut out = m.clone();
        for r in 0..out.rows() {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = if self.constant[c] {
                    0.0
                } else {
                    (*v - self.mean[c]) / self.std[c]
                };
            }
        }
        Ok(out)
    }
}

/// Zero-mean, unit population-variance columns. Constant columns become
/// all zeros.
pub fn standardize(m: &Matrix) -> (Matrix, ScalerStats) {
    let n = m.rows() as f64;
    let d = m.cols();
    let mut mean = vec![0.0; d];
    for r in 0..m.rows() {
        for (acc, v) in mean.iter_mut().zip(m.row(r)) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n);
    let mut var = vec![0.0; d];
    for r in 0..m.rows() {
        for ((acc, v), mu) in var.iter_mut().zip(m.row(r)).zip(&mean) {
            *acc += (v - mu) * (v - mu);
        }
    }
    let mut std = Vec::with_capacity(d);
    let mut constant = Vec::with_capacity(d);
    for v in var {
        let s = (v / n).sqrt();
        if s < CONSTANT_STD {
            std.push(1.0);
            constant.push(true);
        } else {
            std.push(s);
            constant.push(false);
        }
    }
    let stats = ScalerStats { mean, std, constant };
    let out = stats.transform(m).expect("shape matches by construction");
    (out, stats)
}

/// Reads a numeric CSV. Returns the matrix and the header names when
/// `has_header` is set.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<(Matrix, Option<Vec<String>>)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, has_header)
}

pub fn read_csv<R: std::io::Read>(reader: R, has_header: bool) -> Result<(Matrix, Option<Vec<String>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let names = if has_header {
        let h = rdr
            .headers()
            .map_err(|e| Error::Format(e.to_string()))?
            .iter()
            .map(str::to_owned)
            .collect::<Vec<_>>();
        Some(h)
    } else {
        None
    };
    let mut cols = names.as_ref().map(Vec::len);
    let mut data = Vec::new();
    let mut rows = 0;
    let line_offset = if has_header { 2 } else { 1 };
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        let line = i + line_offset;
        match cols {
            Some(c) if c != rec.len() => {
                return Err(Error::Format(format!(
                    "row {line} has {} columns, expected {c}",
                    rec.len()
                )))
            }
            None => cols = Some(rec.len()),
            _ => {}
        }
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: line,
                col: j + 1,
                cell: cell.to_owned(),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: line,
                    col: j + 1,
                    cell: cell.to_owned(),
                });
            }
            data.push(v);
        }
        rows += 1;
    }
    let m = Matrix::from_vec(rows, cols.unwrap_or(0), data)?;
    Ok((m, names))
}

/// Writes a matrix as CSV with an optional header.
pub fn write_csv<W: std::io::Write>(writer: W, m: &Matrix, header: Option<&[String]>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let map = |e: csv::Error| Error::Format(e.to_string());
    if let Some(h) = header {
        w.write_record(h).map_err(map)?;
    }
    for r in 0..m.rows() {
        w.write_record(m.row(r).iter().map(|v| v.to_string())).map_err(map)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))?;
    Ok(())
}

/// Reads one non-negative integer label per line; blank lines are skipped.
pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text)
}

pub fn parse_labels(text: &str) -> Result<Vec<usize>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<usize>().map_err(|_| Error::Parse {
                row: i + 1,
                col: 1,
                cell: l.trim().to_owned(),
            })
        })
        .collect()
}

/// Seeded visiting order for one epoch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub shuffle_seed: u64,
    pub epoch_order: Vec<usize>,
}

impl BatchPlan {
    pub fn new(n: usize, batch_size: usize, shuffle_seed: u64) -> Self {
        let mut epoch_order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
        epoch_order.shuffle(&mut rng);
        BatchPlan {
            batch_size: batch_size.max(1),
            shuffle_seed,
            epoch_order,
        }
    }
}

/// Splits the plan's permutation into consecutive batches of at most
/// `batch_size` rows.
pub fn make_epoch_batches(n: usize, plan: &BatchPlan) -> Vec<&[usize]> {
    assert_eq!(n, plan.epoch_order.len(), "plan was built for a different row count");
    plan.epoch_order.chunks(plan.batch_size.max(1)).collect()
}
