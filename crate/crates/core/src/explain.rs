//! Shape graphs of a fully annealed model: per-feature curves and pairwise
//! interaction surfaces, mean-centering, purification of interactions into
//! main effects, importance scores and a plain-file export.
//!
//! Every term keeps its contribution at each training sample next to the
//! sampled curve or binned surface. Centering and purification move mass
//! between terms and the intercept on both representations at once, so the
//! per-sample terms always add up to the model logits.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{DualDataset, ScalerStats};
use crate::error::{Error, Result};
use crate::gates::Bank;
use crate::model::ModelState;
use crate::tensor::Matrix;

pub const DEFAULT_GRID_POINTS: usize = 256;
pub const DEFAULT_BINS: usize = 32;
pub const PURIFY_MAX_ITER: usize = 500;
pub const PURIFY_TOL: f64 = 1e-8;

/// Quantile bins of one feature over the training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBins {
    /// Strictly increasing, `len = bins + 1` (a single degenerate bin has two
    /// equal edges).
    pub edges: Vec<f64>,
    /// Fraction of training samples per bin.
    pub density: Vec<f64>,
    pub centers: Vec<f64>,
}

impl FeatureBins {
    pub fn from_values(values: &[f64], max_bins: usize) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mut edges: Vec<f64> = Vec::with_capacity(max_bins + 1);
        for b in 0..=max_bins {
            let pos = (b * (n - 1)) as f64 / max_bins as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            let v = sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo]);
            if edges.last().is_none_or(|&e| v > e) {
                edges.push(v);
            }
        }
        if edges.len() == 1 {
            edges.push(edges[0]);
        }
        let bins = edges.len() - 1;
        let mut fb = FeatureBins {
            centers: edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect(),
            density: vec![0.0; bins],
            edges,
        };
        for &v in values {
            let b = fb.bin_of(v);
            fb.density[b] += 1.0 / n as f64;
        }
        fb
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Bins are `[e_a, e_{a+1})`, the last one closed; values outside the
    /// range go to the nearest end bin.
    pub fn bin_of(&self, v: f64) -> usize {
        let inner = &self.edges[1..self.edges.len() - 1];
        inner.partition_point(|&e| e <= v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MainEffect {
    pub feature: usize,
    pub name: String,
    /// Single gates selecting this feature.
    pub single_gates: Vec<usize>,
    /// Pair gates whose two rows both select this feature.
    pub folded_pair_gates: Vec<usize>,
    pub grid: Vec<f64>,
    /// Feature value of each training sample.
    pub sample_values: Vec<f64>,
    /// `grid × K`.
    pub curve: Matrix,
    /// `N × K` contribution at each training sample.
    pub per_sample: Matrix,
    pub bins: FeatureBins,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    /// `first < second`.
    pub features: (usize, usize),
    pub names: (String, String),
    pub pair_gates: Vec<usize>,
    /// One `bins(first) × bins(second)` matrix per cluster, evaluated at bin
    /// centers.
    pub matrices: Vec<Matrix>,
    /// Joint histogram of the training data over the same bins.
    pub density: Matrix,
    /// `N × K`.
    pub per_sample: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub term: String,
    pub features: Vec<usize>,
    /// Over-cluster mean of `per_cluster`.
    pub score: f64,
    pub per_cluster: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeGraphSet {
    pub k: usize,
    pub feature_names: Vec<String>,
    pub intercept: Vec<f64>,
    /// Sorted by feature.
    pub mains: Vec<MainEffect>,
    /// Sorted by feature pair.
    pub pairs: Vec<Interaction>,
    pub importance: Vec<ImportanceEntry>,
}

impl ShapeGraphSet {
    pub fn main(&self, feature: usize) -> Option<&MainEffect> {
        self.mains.iter().find(|m| m.feature == feature)
    }

    pub fn pair(&self, i: usize, j: usize) -> Option<&Interaction> {
        let key = (i.min(j), i.max(j));
        self.pairs.iter().find(|p| p.features == key)
    }

    fn main_index(&self, feature: usize) -> usize {
        self.mains.iter().position(|m| m.feature == feature).expect("pair features have mains")
    }

    pub fn num_samples(&self) -> usize {
        self.mains.first().map_or(0, |m| m.per_sample.rows())
    }
}

fn uniform_grid(values: &[f64], points: usize) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if points == 1 {
        return vec![lo];
    }
    (0..points).map(|g| lo + (hi - lo) * g as f64 / (points - 1) as f64).collect()
}

fn add_into(acc: &mut Matrix, m: &Matrix) {
    for (a, b) in acc.data_mut().iter_mut().zip(m.data()) {
        *a += b;
    }
}

/// Per-gate contributions at every row of `x`, computed in chunks.
fn gate_contributions(model: &ModelState, x: &Matrix) -> Result<(Vec<Matrix>, Vec<Matrix>)> {
    const CHUNK: usize = 1024;
    let n = x.rows();
    let k = model.k;
    let mut singles = vec![Matrix::zeros(n, k); model.num_single()];
    let mut pairs = vec![Matrix::zeros(n, k); model.num_pair()];
    let idx: Vec<usize> = (0..n).collect();
    for (ci, chunk) in idx.chunks(CHUNK).enumerate() {
        let (s, p) = model.shape_contributions(&x.select_rows(chunk))?;
        let start = ci * CHUNK * k;
        for (dst, src) in singles.iter_mut().zip(&s).chain(pairs.iter_mut().zip(&p)) {
            dst.data_mut()[start..start + src.data().len()].copy_from_slice(src.data());
        }
    }
    Ok((singles, pairs))
}

/// Groups the model's gates by the features they select. Requires hard
/// gates.
pub fn extract_shapes(model: &ModelState, data: &DualDataset, grid_points: usize) -> Result<ShapeGraphSet> {
    if !model.gates.is_valid_gam() {
        return Err(Error::State("extract requires a valid GAM".into()));
    }
    if grid_points == 0 {
        return Err(Error::Config("grid_points must be positive".into()));
    }
    let x = data.x_interp();
    if x.cols() != model.d {
        return Err(Error::shape("extract_shapes", model.d, x.cols()));
    }
    if x.rows() == 0 {
        return Err(Error::Input("extract_shapes needs at least one sample".into()));
    }
    let (n, k) = (x.rows(), model.k);
    let single_sel = model.gates.selected_features(&model.params, Bank::Single);
    let pair_sel = model.gates.selected_features(&model.params, Bank::Pair);
    let (single_contrib, pair_contrib) = gate_contributions(model, x)?;

    let mut main_gates: BTreeMap<usize, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    let mut pair_gates: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (c, &f) in single_sel.iter().enumerate() {
        main_gates.entry(f).or_default().0.push(c);
    }
    for p in 0..model.num_pair() {
        let (a, b) = (pair_sel[2 * p], pair_sel[2 * p + 1]);
        if a == b {
            main_gates.entry(a).or_default().1.push(p);
        } else {
            pair_gates.entry((a.min(b), a.max(b))).or_default().push(p);
            main_gates.entry(a).or_default();
            main_gates.entry(b).or_default();
        }
    }

    let names = data.feature_names().to_vec();
    let mains = main_gates
        .into_iter()
        .map(|(f, (singles, folded))| {
            let column = x.column(f);
            let grid = uniform_grid(&column, grid_points);
            let mut curve = Matrix::zeros(grid.len(), k);
            let mut per_sample = Matrix::zeros(n, k);
            for &c in &singles {
                add_into(&mut curve, &model.eval_single_shape(c, &grid));
                add_into(&mut per_sample, &single_contrib[c]);
            }
            if !folded.is_empty() {
                let diag: Vec<f64> = grid.iter().flat_map(|&g| [g, g]).collect();
                let diag = Matrix::from_vec(grid.len(), 2, diag)?;
                for &p in &folded {
                    add_into(&mut curve, &model.eval_pair_shape(p, &diag));
                    add_into(&mut per_sample, &pair_contrib[p]);
                }
            }
            Ok(MainEffect {
                feature: f,
                name: names[f].clone(),
                single_gates: singles,
                folded_pair_gates: folded,
                grid,
                bins: FeatureBins::from_values(&column, DEFAULT_BINS),
                sample_values: column,
                curve,
                per_sample,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let bins_of = |f: usize| &mains.iter().find(|m| m.feature == f).expect("registered above").bins;
    let mut pairs = Vec::with_capacity(pair_gates.len());
    for ((i, j), gates) in pair_gates {
        let (bi, bj) = (bins_of(i), bins_of(j));
        let (ni, nj) = (bi.len(), bj.len());
        let mut matrices = vec![Matrix::zeros(ni, nj); k];
        let mut per_sample = Matrix::zeros(n, k);
        for &p in &gates {
            // gate rows may hold the features in either order
            let swapped = pair_sel[2 * p] != i;
            let mut inputs = Vec::with_capacity(2 * ni * nj);
            for &u in &bi.centers {
                for &v in &bj.centers {
                    if swapped {
                        inputs.extend([v, u]);
                    } else {
                        inputs.extend([u, v]);
                    }
                }
            }
            let out = model.eval_pair_shape(p, &Matrix::from_vec(ni * nj, 2, inputs)?);
            for (kk, m) in matrices.iter_mut().enumerate() {
                for (cell, v) in m.data_mut().iter_mut().zip(out.column(kk)) {
                    *cell += v;
                }
            }
            add_into(&mut per_sample, &pair_contrib[p]);
        }
        let mut density = Matrix::zeros(ni, nj);
        for r in 0..n {
            let (a, b) = (bi.bin_of(x.get(r, i)), bj.bin_of(x.get(r, j)));
            density.set(a, b, density.get(a, b) + 1.0 / n as f64);
        }
        pairs.push(Interaction {
            features: (i, j),
            names: (names[i].clone(), names[j].clone()),
            pair_gates: gates,
            matrices,
            density,
            per_sample,
        });
    }

    Ok(ShapeGraphSet {
        k,
        feature_names: names,
        intercept: model.intercept_values().to_vec(),
        mains,
        pairs,
        importance: Vec::new(),
    })
}

/// Shifts every main-effect curve so its mean over the training samples is
/// zero, moving the shift into the intercept.
pub fn mean_center(mut shapes: ShapeGraphSet) -> ShapeGraphSet {
    let k = shapes.k;
    for main in &mut shapes.mains {
        let n = main.per_sample.rows() as f64;
        for kk in 0..k {
            let mean = main.per_sample.column(kk).iter().sum::<f64>() / n;
            if mean == 0.0 {
                continue;
            }
            for r in 0..main.per_sample.rows() {
                main.per_sample.set(r, kk, main.per_sample.get(r, kk) - mean);
            }
            for g in 0..main.curve.rows() {
                main.curve.set(g, kk, main.curve.get(g, kk) - mean);
            }
            shapes.intercept[kk] += mean;
        }
    }
    shapes
}

/// Density-weighted means of each row (`axis = 0`) or column (`axis = 1`)
/// of `m`; empty slices get 0.
fn weighted_marginals(m: &Matrix, w: &Matrix, axis: usize) -> Vec<f64> {
    let (rows, cols) = m.shape();
    let outer = if axis == 0 { rows } else { cols };
    (0..outer)
        .map(|o| {
            let (mut num, mut den) = (0.0, 0.0);
            for inner in 0..(if axis == 0 { cols } else { rows }) {
                let (r, c) = if axis == 0 { (o, inner) } else { (inner, o) };
                num += w.get(r, c) * m.get(r, c);
                den += w.get(r, c);
            }
            if den > 0.0 {
                num / den
            } else {
                0.0
            }
        })
        .collect()
}

/// Outcome of purifying one matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PurifiedMatrix {
    pub matrix: Matrix,
    /// Mass moved out of each row, to be added to the first feature's main.
    pub row_transfer: Vec<f64>,
    pub col_transfer: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Alternately removes weighted row and column means from `m` until the
/// largest transfer falls below `tol`.
pub fn purify_matrix(m: &Matrix, density: &Matrix, max_iter: usize, tol: f64) -> PurifiedMatrix {
    let (rows, cols) = m.shape();
    let mut matrix = m.clone();
    let mut row_transfer = vec![0.0; rows];
    let mut col_transfer = vec![0.0; cols];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let mut moved = 0.0f64;
        let rm = weighted_marginals(&matrix, density, 0);
        for (r, &mu) in rm.iter().enumerate() {
            row_transfer[r] += mu;
            moved = moved.max(mu.abs());
            matrix.row_mut(r).iter_mut().for_each(|v| *v -= mu);
        }
        let cm = weighted_marginals(&matrix, density, 1);
        for (c, &mu) in cm.iter().enumerate() {
            col_transfer[c] += mu;
            moved = moved.max(mu.abs());
            for r in 0..rows {
                matrix.set(r, c, matrix.get(r, c) - mu);
            }
        }
        if moved < tol {
            converged = true;
            break;
        }
    }
    PurifiedMatrix {
        matrix,
        row_transfer,
        col_transfer,
        iterations,
        converged,
    }
}

/// Moves the density-weighted marginals of every interaction into the main
/// effects of its two features. Each transfer is constant over a bin, and is
/// applied to the main curve, the main per-sample values and the interaction
/// per-sample values alike.
pub fn purify(mut shapes: ShapeGraphSet) -> ShapeGraphSet {
    let k = shapes.k;
    for p in 0..shapes.pairs.len() {
        let (i, j) = shapes.pairs[p].features;
        let (mi, mj) = (shapes.main_index(i), shapes.main_index(j));
        for kk in 0..k {
            let pair = &shapes.pairs[p];
            let out = purify_matrix(&pair.matrices[kk], &pair.density, PURIFY_MAX_ITER, PURIFY_TOL);
            if !out.converged {
                log::warn!(
                    "purification of pair ({i}, {j}) cluster {kk} did not converge in {PURIFY_MAX_ITER} iterations"
                );
            }
            let bins_i = shapes.mains[mi].bins.clone();
            let bins_j = shapes.mains[mj].bins.clone();
            let pair = &mut shapes.pairs[p];
            pair.matrices[kk] = out.matrix;
            // the sample columns come from the interpretable view
            for r in 0..pair.per_sample.rows() {
                let ti = out.row_transfer[bins_i.bin_of(shapes.mains[mi].sample_values[r])];
                let tj = out.col_transfer[bins_j.bin_of(shapes.mains[mj].sample_values[r])];
                pair.per_sample.set(r, kk, pair.per_sample.get(r, kk) - ti - tj);
            }
            for (mains_idx, bins, transfer) in [(mi, &bins_i, &out.row_transfer), (mj, &bins_j, &out.col_transfer)] {
                let main = &mut shapes.mains[mains_idx];
                for g in 0..main.grid.len() {
                    let t = transfer[bins.bin_of(main.grid[g])];
                    main.curve.set(g, kk, main.curve.get(g, kk) + t);
                }
                for r in 0..main.per_sample.rows() {
                    let t = transfer[bins.bin_of(main.sample_values[r])];
                    main.per_sample.set(r, kk, main.per_sample.get(r, kk) + t);
                }
            }
        }
    }
    shapes
}

/// `meanₙ |f_{t,k}(xₙ)|` for every term and cluster, with the over-cluster
/// mean as the scalar score. Mains come first, then pairs.
pub fn importance(shapes: &ShapeGraphSet) -> Vec<ImportanceEntry> {
    let entry = |term: String, features: Vec<usize>, per_sample: &Matrix| {
        let n = per_sample.rows().max(1) as f64;
        let per_cluster: Vec<f64> = (0..shapes.k)
            .map(|kk| per_sample.column(kk).iter().map(|v| v.abs()).sum::<f64>() / n)
            .collect();
        ImportanceEntry {
            term,
            features,
            score: per_cluster.iter().sum::<f64>() / shapes.k as f64,
            per_cluster,
        }
    };
    let mut out: Vec<ImportanceEntry> = shapes
        .mains
        .iter()
        .map(|m| entry(m.name.clone(), vec![m.feature], &m.per_sample))
        .collect();
    out.extend(shapes.pairs.iter().map(|p| {
        entry(
            format!("{}:{}", p.names.0, p.names.1),
            vec![p.features.0, p.features.1],
            &p.per_sample,
        )
    }));
    out
}

/// Intercept plus every term at each training sample (`N × K`).
pub fn reconstruct_logits(shapes: &ShapeGraphSet) -> Matrix {
    let n = shapes.num_samples();
    let mut out = Matrix::zeros(n, shapes.k);
    for r in 0..n {
        out.row_mut(r).copy_from_slice(&shapes.intercept);
    }
    for m in &shapes.mains {
        add_into(&mut out, &m.per_sample);
    }
    for p in &shapes.pairs {
        add_into(&mut out, &p.per_sample);
    }
    out
}

/// Extraction, centering, purification, re-centering of the mains that
/// received interaction mass, and importance.
pub fn explain(model: &ModelState, data: &DualDataset, grid_points: usize) -> Result<ShapeGraphSet> {
    let shapes = extract_shapes(model, data, grid_points)?;
    let mut shapes = mean_center(purify(mean_center(shapes)));
    shapes.importance = importance(&shapes);
    Ok(shapes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFiles {
    pub index: usize,
    pub name: String,
    pub curve: String,
    pub density: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFile {
    pub features: [usize; 2],
    pub names: [String; 2],
    pub file: String,
}

/// `manifest.json` of an export directory. File names are relative to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub schema_version: u32,
    pub k: usize,
    pub feature_names: Vec<String>,
    pub intercept: Vec<f64>,
    pub features: Vec<FeatureFiles>,
    pub pairs: Vec<PairFile>,
    pub importance: String,
}

pub const EXPORT_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const IMPORTANCE_FILE: &str = "importance.csv";

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn unscale(scaler: Option<&ScalerStats>, feature: usize, v: f64) -> f64 {
    match scaler {
        Some(s) if s.constant[feature] => s.mean[feature],
        Some(s) => v * s.std[feature] + s.mean[feature],
        None => v,
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

fn write_rows(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes curves, densities, pair surfaces, the importance table and a
/// manifest into `dir`. Feature values are mapped back to original units
/// when `scaler` is given. Output is byte-for-byte deterministic.
pub fn export_dir(shapes: &ShapeGraphSet, dir: &Path, scaler: Option<&ScalerStats>) -> Result<ExportManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let k = shapes.k;
    let cluster_cols: Vec<String> = (0..k).map(|kk| format!("cluster_{kk}")).collect();
    let mut features = Vec::with_capacity(shapes.mains.len());
    for m in &shapes.mains {
        let stem = format!("{}_{}", m.feature, file_stem(&m.name));
        let curve = format!("feature_{stem}.csv");
        let density = format!("density_{stem}.csv");
        let mut header = vec!["grid_value".to_string()];
        header.extend(cluster_cols.iter().cloned());
        write_rows(
            &dir.join(&curve),
            &header,
            m.grid.iter().enumerate().map(|(g, &v)| {
                let mut row = vec![unscale(scaler, m.feature, v).to_string()];
                row.extend(m.curve.row(g).iter().map(f64::to_string));
                row
            }),
        )?;
        let header = ["bin_lower", "bin_upper", "density"].map(String::from);
        write_rows(
            &dir.join(&density),
            &header,
            m.bins.density.iter().enumerate().map(|(b, d)| {
                vec![
                    unscale(scaler, m.feature, m.bins.edges[b]).to_string(),
                    unscale(scaler, m.feature, m.bins.edges[b + 1]).to_string(),
                    d.to_string(),
                ]
            }),
        )?;
        features.push(FeatureFiles {
            index: m.feature,
            name: m.name.clone(),
            curve,
            density,
        });
    }

    let mut pairs = Vec::with_capacity(shapes.pairs.len());
    for p in &shapes.pairs {
        let (i, j) = p.features;
        let file = format!("pair_{i}_{j}.csv");
        let (bi, bj) = (
            &shapes.main(i).expect("pair feature has a main").bins,
            &shapes.main(j).expect("pair feature has a main").bins,
        );
        let header = ["cluster", "bin_first", "bin_second", "first_value", "second_value", "contribution", "density"]
            .map(String::from);
        let mut rows = Vec::new();
        for (kk, m) in p.matrices.iter().enumerate() {
            for a in 0..m.rows() {
                for b in 0..m.cols() {
                    rows.push(vec![
                        kk.to_string(),
                        a.to_string(),
                        b.to_string(),
                        unscale(scaler, i, bi.centers[a]).to_string(),
                        unscale(scaler, j, bj.centers[b]).to_string(),
                        m.get(a, b).to_string(),
                        p.density.get(a, b).to_string(),
                    ]);
                }
            }
        }
        write_rows(&dir.join(&file), &header, rows)?;
        pairs.push(PairFile {
            features: [i, j],
            names: [p.names.0.clone(), p.names.1.clone()],
            file,
        });
    }

    let mut ranked: Vec<&ImportanceEntry> = shapes.importance.iter().collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut header = vec!["term".to_string(), "features".to_string(), "importance".to_string()];
    header.extend(cluster_cols.iter().cloned());
    write_rows(
        &dir.join(IMPORTANCE_FILE),
        &header,
        ranked.into_iter().map(|e| {
            let feats: Vec<String> = e.features.iter().map(usize::to_string).collect();
            let mut row = vec![e.term.clone(), feats.join(" "), e.score.to_string()];
            row.extend(e.per_cluster.iter().map(f64::to_string));
            row
        }),
    )?;

    let manifest = ExportManifest {
        schema_version: EXPORT_SCHEMA_VERSION,
        k,
        feature_names: shapes.feature_names.clone(),
        intercept: shapes.intercept.clone(),
        features,
        pairs,
        importance: IMPORTANCE_FILE.to_string(),
    };
    let path: PathBuf = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn load_manifest(dir: &Path) -> Result<ExportManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}
