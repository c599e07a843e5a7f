//! Gated neural basis model.
//!
//! Every single gate feeds its selected value through one shared
//! `1 → H → H → B` backbone, every pair gate through a shared `2 → H → H → B`
//! backbone. Shape function `c` for cluster `k` is `λ_{c,k} · b(s_c(x))`, and
//! the cluster logits are the per-cluster intercept plus the sum of all shape
//! functions. Fuzzy assignments are the softmax of the logits.
//!
//! Forward and backward passes work on whole batches so the hidden layers
//! become matrix products.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::gates::{self, entmax_backward, Bank, GateBank, Selector};
use crate::tensor::{argmax, gemm_nn, gemm_nt, gemm_tn, GradTape, Matrix, ParamId, ParamStore};

/// Handles for one backbone MLP. Weights are stored `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Backbone {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub w3: ParamId,
    pub b3: ParamId,
    pub input: usize,
    pub hidden: usize,
    pub basis: usize,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BackboneCache {
    pub input: Matrix,
    a1: Matrix,
    a2: Matrix,
    /// `n × B` basis outputs.
    pub out: Matrix,
}

impl Backbone {
    fn init(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        input: usize,
        hidden: usize,
        basis: usize,
    ) -> Self {
        let mut layer = |name: &str, out_dim: usize, in_dim: usize| {
            let w = he_matrix(rng, out_dim, in_dim, in_dim);
            let w = store.register(format!("{prefix}.{name}.weight"), w);
            let b = store.register(format!("{prefix}.{name}.bias"), Matrix::zeros(1, out_dim));
            (w, b)
        };
        let (w1, b1) = layer("l1", hidden, input);
        let (w2, b2) = layer("l2", hidden, hidden);
        let (w3, b3) = layer("l3", basis, hidden);
        Backbone {
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            input,
            hidden,
            basis,
        }
    }

    /// Runs the MLP on an `n × input` matrix.
    pub fn forward(&self, store: &ParamStore, input: Matrix) -> BackboneCache {
        let n = input.rows();
        let a1 = dense(store, self.w1, self.b1, &input, true);
        let a2 = dense(store, self.w2, self.b2, &a1, true);
        let out = dense(store, self.w3, self.b3, &a2, false);
        debug_assert_eq!(out.shape(), (n, self.basis));
        BackboneCache { input, a1, a2, out }
    }

    /// Accumulates weight gradients into `tape` and returns `∂L/∂input`.
    pub fn backward(
        &self,
        store: &ParamStore,
        cache: &BackboneCache,
        d_out: &Matrix,
        tape: &mut GradTape,
    ) -> Matrix {
        let d_a2 = dense_backward(store, self.w3, self.b3, &cache.a2, d_out, tape);
        let d_z2 = relu_mask(d_a2, &cache.a2);
        let d_a1 = dense_backward(store, self.w2, self.b2, &cache.a1, &d_z2, tape);
        let d_z1 = relu_mask(d_a1, &cache.a1);
        dense_backward(store, self.w1, self.b1, &cache.input, &d_z1, tape)
    }
}

fn he_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize) -> Matrix {
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized above")
}

/// `act(x · Wᵀ + b)`.
fn dense(store: &ParamStore, w: ParamId, b: ParamId, x: &Matrix, relu: bool) -> Matrix {
    let w = store.get(w);
    let b = store.get(b).data();
    let (n, in_dim) = x.shape();
    let out_dim = w.rows();
    let mut out = Matrix::zeros(n, out_dim);
    for r in 0..n {
        out.row_mut(r).copy_from_slice(b);
    }
    gemm_nt(x.data(), w.data(), out.data_mut(), n, in_dim, out_dim);
    if relu {
        out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    }
    out
}

fn dense_backward(
    store: &ParamStore,
    w: ParamId,
    b: ParamId,
    x: &Matrix,
    d_out: &Matrix,
    tape: &mut GradTape,
) -> Matrix {
    let weights = store.get(w);
    let (n, in_dim) = x.shape();
    let out_dim = weights.rows();
    gemm_tn(d_out.data(), x.data(), tape.get_mut(w).data_mut(), n, out_dim, in_dim);
    let db = tape.get_mut(b).data_mut();
    for r in 0..n {
        for (acc, v) in db.iter_mut().zip(d_out.row(r)) {
            *acc += v;
        }
    }
    let mut d_x = Matrix::zeros(n, in_dim);
    gemm_nn(d_out.data(), weights.data(), d_x.data_mut(), n, out_dim, in_dim);
    d_x
}

fn relu_mask(mut grad: Matrix, activation: &Matrix) -> Matrix {
    for (g, a) in grad.data_mut().iter_mut().zip(activation.data()) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }
    grad
}

/// All trainable state of a clustering model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub params: ParamStore,
    pub gates: GateBank,
    pub backbone_single: Backbone,
    pub backbone_pair: Option<Backbone>,
    /// `C × (K·B)`: row `c` holds `λ_{c,0} … λ_{c,K−1}`.
    pub lambda_single: ParamId,
    /// `P × (K·B)`.
    pub lambda_pair: ParamId,
    /// `1 × K` per-cluster intercept.
    pub intercept: ParamId,
    /// `K × R` centroids in the transformed space.
    pub centroids: ParamId,
    pub k: usize,
    pub d: usize,
    pub r: usize,
}

/// Everything the backward pass needs from a batch forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub single_selectors: Vec<Selector>,
    pub pair_selectors: Vec<Selector>,
    pub single: Vec<BackboneCache>,
    pub pair: Vec<BackboneCache>,
    /// `n × K`.
    pub logits: Matrix,
    /// `n × K` softmax of the logits.
    pub weights: Matrix,
}

/// Builds a model with seeded He initialization and the given centroids.
pub fn init_model(
    cfg: &TrainConfig,
    num_features: usize,
    seed: u64,
    centroids: &Matrix,
) -> Result<ModelState> {
    if centroids.rows() != cfg.k || centroids.cols() == 0 {
        return Err(Error::Config(format!(
            "initial centroids must be {} x R, got {} x {}",
            cfg.k,
            centroids.rows(),
            centroids.cols()
        )));
    }
    if cfg.k < 2 {
        return Err(Error::Config("k must be at least 2".into()));
    }
    if num_features == 0 {
        return Err(Error::Config("model needs at least one feature".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamStore::new();
    let gates = gates::init_bank(
        &mut params,
        &mut rng,
        cfg.num_single,
        cfg.num_pair,
        num_features,
        cfg.alpha,
    );
    let backbone_single = Backbone::init(&mut params, &mut rng, "single", 1, cfg.hidden, cfg.basis);
    let backbone_pair = (cfg.num_pair > 0)
        .then(|| Backbone::init(&mut params, &mut rng, "pair", 2, cfg.hidden, cfg.basis));
    // The reconstruction layer is linear, so fan-in scaling without the ReLU gain.
    let lam_std = (1.0 / cfg.basis as f64).sqrt();
    let mut lam = |rows: usize| {
        let normal = Normal::new(0.0, lam_std).expect("positive std");
        let data = (0..rows * cfg.k * cfg.basis).map(|_| normal.sample(&mut rng)).collect();
        Matrix::from_vec(rows, cfg.k * cfg.basis, data).expect("sized above")
    };
    let ls = lam(cfg.num_single);
    let lp = lam(cfg.num_pair);
    let lambda_single = params.register("lambda.single", ls);
    let lambda_pair = params.register("lambda.pair", lp);
    let intercept = params.register("intercept", Matrix::zeros(1, cfg.k));
    let centroids_id = params.register("centroids", centroids.clone());
    Ok(ModelState {
        params,
        gates,
        backbone_single,
        backbone_pair,
        lambda_single,
        lambda_pair,
        intercept,
        centroids: centroids_id,
        k: cfg.k,
        d: num_features,
        r: centroids.cols(),
    })
}

impl ModelState {
    pub fn num_single(&self) -> usize {
        self.gates.num_single
    }

    pub fn num_pair(&self) -> usize {
        self.gates.num_pair
    }

    pub fn basis(&self) -> usize {
        self.backbone_single.basis
    }

    pub fn centroid_matrix(&self) -> &Matrix {
        self.params.get(self.centroids)
    }

    pub fn intercept_values(&self) -> &[f64] {
        self.params.get(self.intercept).data()
    }

    /// `λ_c` as a `K × B` row-major slice.
    pub fn lambda(&self, bank: Bank, gate: usize) -> &[f64] {
        match bank {
            Bank::Single => self.params.get(self.lambda_single).row(gate),
            Bank::Pair => self.params.get(self.lambda_pair).row(gate),
        }
    }

    /// Parameters that receive no updates in the current state: gate logits
    /// of a hard-switched bank.
    pub fn frozen_params(&self) -> Vec<ParamId> {
        let mut ids = Vec::new();
        if self.gates.hard_single {
            ids.push(self.gates.single_logits);
        }
        if self.gates.hard_pair {
            ids.push(self.gates.pair_logits);
        }
        ids
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.d {
            return Err(Error::shape("model input", format!("{} features", self.d), x.cols()));
        }
        Ok(())
    }

    /// Selected inputs for each single gate: `n × 1` matrices.
    fn single_inputs(&self, x: &Matrix, selectors: &[Selector]) -> Vec<Matrix> {
        selectors
            .iter()
            .map(|s| {
                let col = (0..x.rows()).map(|r| s.apply(x.row(r))).collect();
                Matrix::from_vec(x.rows(), 1, col).expect("n values")
            })
            .collect()
    }

    fn pair_inputs(&self, x: &Matrix, selectors: &[Selector]) -> Vec<Matrix> {
        selectors
            .chunks(2)
            .map(|s| {
                let mut data = Vec::with_capacity(2 * x.rows());
                for r in 0..x.rows() {
                    data.push(s[0].apply(x.row(r)));
                    data.push(s[1].apply(x.row(r)));
                }
                Matrix::from_vec(x.rows(), 2, data).expect("n pairs")
            })
            .collect()
    }

    /// Batch forward pass. `x` is `n × D`.
    pub fn forward(&self, x: &Matrix) -> Result<Forward> {
        self.check_input(x)?;
        let n = x.rows();
        let (k, b) = (self.k, self.basis());
        let single_selectors = self.gates.selectors(&self.params, Bank::Single);
        let pair_selectors = self.gates.selectors(&self.params, Bank::Pair);

        let mut logits = Matrix::zeros(n, k);
        let bias = self.intercept_values();
        for r in 0..n {
            logits.row_mut(r).copy_from_slice(bias);
        }

        let single: Vec<BackboneCache> = self
            .single_inputs(x, &single_selectors)
            .into_iter()
            .map(|u| self.backbone_single.forward(&self.params, u))
            .collect();
        for (c, cache) in single.iter().enumerate() {
            gemm_nt(cache.out.data(), self.lambda(Bank::Single, c), logits.data_mut(), n, b, k);
        }

        let pair: Vec<BackboneCache> = match &self.backbone_pair {
            Some(bb) => self
                .pair_inputs(x, &pair_selectors)
                .into_iter()
                .map(|u| bb.forward(&self.params, u))
                .collect(),
            None => Vec::new(),
        };
        for (p, cache) in pair.iter().enumerate() {
            gemm_nt(cache.out.data(), self.lambda(Bank::Pair, p), logits.data_mut(), n, b, k);
        }

        let weights = softmax_rows(&logits);
        Ok(Forward {
            single_selectors,
            pair_selectors,
            single,
            pair,
            logits,
            weights,
        })
    }

    /// Backpropagates `∂L/∂logits` (`n × K`) through the model into `tape`.
    ///
    /// Gate logits of a hard-switched bank receive no gradient.
    pub fn backward(&self, x: &Matrix, fwd: &Forward, d_logits: &Matrix, tape: &mut GradTape) {
        let n = x.rows();
        let d_bias = tape.get_mut(self.intercept).data_mut();
        for r in 0..n {
            for (acc, v) in d_bias.iter_mut().zip(d_logits.row(r)) {
                *acc += v;
            }
        }

        for (c, cache) in fwd.single.iter().enumerate() {
            let d_h = self.lambda_backward(Bank::Single, c, &cache.out, d_logits, tape);
            let d_u = self.backbone_single.backward(&self.params, cache, &d_h, tape);
            if let Selector::Soft(w) = &fwd.single_selectors[c] {
                let d_logit =
                    gate_logit_grad(w, self.gates.alpha, self.gates.temp_single, x, d_u.data(), 1, 0);
                let row = tape.get_mut(self.gates.single_logits).row_mut(c);
                for (acc, v) in row.iter_mut().zip(&d_logit) {
                    *acc += v;
                }
            }
        }

        if let Some(bb) = &self.backbone_pair {
            for (p, cache) in fwd.pair.iter().enumerate() {
                let d_h = self.lambda_backward(Bank::Pair, p, &cache.out, d_logits, tape);
                let d_u = bb.backward(&self.params, cache, &d_h, tape);
                for side in 0..2 {
                    if let Selector::Soft(w) = &fwd.pair_selectors[2 * p + side] {
                        let d_logit =
                            gate_logit_grad(w, self.gates.alpha, self.gates.temp_pair, x, d_u.data(), 2, side);
                        let row = tape.get_mut(self.gates.pair_logits).row_mut(2 * p + side);
                        for (acc, v) in row.iter_mut().zip(&d_logit) {
                            *acc += v;
                        }
                    }
                }
            }
        }
    }

    /// Gradient of λ for one gate; returns `∂L/∂b(·)` (`n × B`).
    fn lambda_backward(
        &self,
        bank: Bank,
        gate: usize,
        basis_out: &Matrix,
        d_logits: &Matrix,
        tape: &mut GradTape,
    ) -> Matrix {
        let n = basis_out.rows();
        let (k, b) = (self.k, self.basis());
        let id = match bank {
            Bank::Single => self.lambda_single,
            Bank::Pair => self.lambda_pair,
        };
        gemm_tn(d_logits.data(), basis_out.data(), tape.get_mut(id).row_mut(gate), n, k, b);
        let mut d_h = Matrix::zeros(n, b);
        gemm_nn(d_logits.data(), self.lambda(bank, gate), d_h.data_mut(), n, k, b);
        d_h
    }

    /// Cluster logits for a batch (`n × K`).
    pub fn logits_batch(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward_chunked(x)?.0)
    }

    /// Fuzzy assignments for a batch (`n × K`).
    pub fn assign_batch(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward_chunked(x)?.1)
    }

    /// Hard cluster per row (highest fuzzy weight, lowest index on ties).
    pub fn predict_batch(&self, x: &Matrix) -> Result<Vec<usize>> {
        let w = self.assign_batch(x)?;
        Ok((0..w.rows()).map(|r| argmax(w.row(r))).collect())
    }

    fn forward_chunked(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        const CHUNK: usize = 1024;
        self.check_input(x)?;
        let mut logits = Vec::with_capacity(x.rows() * self.k);
        let mut weights = Vec::with_capacity(x.rows() * self.k);
        let idx: Vec<usize> = (0..x.rows()).collect();
        for chunk in idx.chunks(CHUNK) {
            let fwd = self.forward(&x.select_rows(chunk))?;
            logits.extend_from_slice(fwd.logits.data());
            weights.extend_from_slice(fwd.weights.data());
        }
        Ok((
            Matrix::from_vec(x.rows(), self.k, logits)?,
            Matrix::from_vec(x.rows(), self.k, weights)?,
        ))
    }

    /// Per-gate contributions `f_{c,k}(x)` for a batch: one `n × K` matrix
    /// per single gate and one per pair gate. Their sum plus the intercept
    /// is the logit matrix.
    pub fn shape_contributions(&self, x: &Matrix) -> Result<(Vec<Matrix>, Vec<Matrix>)> {
        let fwd = self.forward(x)?;
        let n = x.rows();
        let (k, b) = (self.k, self.basis());
        let project = |bank: Bank, gate: usize, out: &Matrix| {
            let mut m = Matrix::zeros(n, k);
            gemm_nt(out.data(), self.lambda(bank, gate), m.data_mut(), n, b, k);
            m
        };
        let singles = fwd
            .single
            .iter()
            .enumerate()
            .map(|(c, cache)| project(Bank::Single, c, &cache.out))
            .collect();
        let pairs = fwd
            .pair
            .iter()
            .enumerate()
            .map(|(p, cache)| project(Bank::Pair, p, &cache.out))
            .collect();
        Ok((singles, pairs))
    }

    /// `f_{c,·}` evaluated directly at scalar backbone inputs (`len × K`).
    pub fn eval_single_shape(&self, gate: usize, values: &[f64]) -> Matrix {
        let u = Matrix::from_vec(values.len(), 1, values.to_vec()).expect("column");
        let out = self.backbone_single.forward(&self.params, u).out;
        let mut m = Matrix::zeros(values.len(), self.k);
        gemm_nt(out.data(), self.lambda(Bank::Single, gate), m.data_mut(), values.len(), self.basis(), self.k);
        m
    }

    /// `f_{p,·}` at `(first, second)` backbone inputs given as `len × 2`.
    pub fn eval_pair_shape(&self, gate: usize, inputs: &Matrix) -> Matrix {
        let bb = self.backbone_pair.as_ref().expect("model has pair gates");
        let n = inputs.rows();
        let out = bb.forward(&self.params, inputs.clone()).out;
        let mut m = Matrix::zeros(n, self.k);
        gemm_nt(out.data(), self.lambda(Bank::Pair, gate), m.data_mut(), n, self.basis(), self.k);
        m
    }
}

/// `∂L/∂F` for one gate row given `∂L/∂s` per sample. `d_u` is `n × width`
/// and column `side` holds this row's input gradient.
fn gate_logit_grad(
    weights: &[f64],
    alpha: f64,
    temperature: f64,
    x: &Matrix,
    d_u: &[f64],
    width: usize,
    side: usize,
) -> Vec<f64> {
    let d = x.cols();
    let mut d_w = vec![0.0; d];
    for r in 0..x.rows() {
        let g = d_u[r * width + side];
        if g == 0.0 {
            continue;
        }
        for (acc, v) in d_w.iter_mut().zip(x.row(r)) {
            *acc += g * v;
        }
    }
    let mut d_z = entmax_backward(weights, alpha, &d_w);
    d_z.iter_mut().for_each(|v| *v /= temperature);
    d_z
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    out
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// `g(x)` for one sample.
pub fn cluster_logits(model: &ModelState, x: &[f64]) -> Result<Vec<f64>> {
    let m = Matrix::from_vec(1, x.len(), x.to_vec())?;
    Ok(model.logits_batch(&m)?.into_data())
}

/// Fuzzy weights `w(x) = softmax(g(x))` for one sample.
pub fn assign(model: &ModelState, x: &[f64]) -> Result<Vec<f64>> {
    let mut g = cluster_logits(model, x)?;
    softmax_in_place(&mut g);
    Ok(g)
}

pub fn predict_hard(model: &ModelState, x: &[f64]) -> Result<usize> {
    Ok(argmax(&assign(model, x)?))
}
