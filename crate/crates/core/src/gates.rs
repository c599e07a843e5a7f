//! Entmax feature-selection gates and their temperature schedule.
//!
//! A single gate `c` mixes the input features with weights
//! `entmax_α(F_c / T)`; a pair gate `p` does the same with two independent
//! logit rows and the pair temperature `T₂`. Annealing shrinks the
//! temperatures until every gate puts all its mass on one feature, at which
//! point the bank switches to exact coordinate selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{argmax, dot, Matrix, ParamId, ParamStore};

pub const DEFAULT_ALPHA: f64 = 1.5;

/// A gate counts as one-hot when its largest weight is at least `1 − tol`.
pub const DEFAULT_HARD_SWITCH_TOL: f64 = 1e-9;

/// Temperature reached after the configured number of tempering epochs when
/// ε is derived rather than set.
pub const FINAL_TEMPERATURE: f64 = 1e-3;

const BISECT_ITERS: usize = 60;

#[inline]
fn entmax_power(v: f64, alpha: f64) -> f64 {
    if v <= 0.0 {
        0.0
    } else if alpha == 1.5 {
        v * v
    } else if alpha == 2.0 {
        v
    } else {
        v.powf(1.0 / (alpha - 1.0))
    }
}

/// Writes `entmax_α(logits)` into `out`.
///
/// Finds the threshold τ with `Σ max(0, (α−1)zᵢ − τ)^{1/(α−1)} = 1` by
/// bisection and renormalizes the result.
pub fn entmax_into(logits: &[f64], alpha: f64, out: &mut [f64]) {
    debug_assert!(alpha > 1.0);
    debug_assert_eq!(logits.len(), out.len());
    let d = logits.len();
    if d == 1 {
        out[0] = 1.0;
        return;
    }
    let scale = alpha - 1.0;
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v)) * scale;
    let mut tau_lo = max - 1.0;
    let tau_hi = max - (1.0 / d as f64).powf(scale);
    let mut width = tau_hi - tau_lo;
    let mut tau = tau_lo;
    for _ in 0..BISECT_ITERS {
        width *= 0.5;
        tau = tau_lo + width;
        let total: f64 = logits
            .iter()
            .map(|&z| entmax_power(z * scale - tau, alpha))
            .sum();
        if total >= 1.0 {
            tau_lo = tau;
        }
    }
    // tau < max always, so the top entry keeps positive mass.
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = entmax_power(z * scale - tau, alpha);
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

pub fn entmax(logits: &[f64], alpha: f64) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    entmax_into(logits, alpha, &mut out);
    out
}

/// Vector-Jacobian product of entmax with respect to its logits.
///
/// With `qᵢ = pᵢ^{2−α}` on the support and zero elsewhere,
/// `J·v = q⊙v − q (q·v)/Σq`.
pub fn entmax_backward(probs: &[f64], alpha: f64, upstream: &[f64]) -> Vec<f64> {
    let q: Vec<f64> = probs
        .iter()
        .map(|&p| if p > 0.0 { p.powf(2.0 - alpha) } else { 0.0 })
        .collect();
    let qsum: f64 = q.iter().sum();
    if qsum == 0.0 {
        return vec![0.0; probs.len()];
    }
    let coef = dot(&q, upstream) / qsum;
    q.iter().zip(upstream).map(|(qi, g)| qi * (g - coef)).collect()
}

pub fn is_one_hot(probs: &[f64], tol: f64) -> bool {
    probs.iter().fold(0.0f64, |m, &v| m.max(v)) >= 1.0 - tol
}

/// How one gate row combines the input features.
#[derive(Debug, Clone, PartialEq)]
pub enum Selector {
    /// Entmax mixture weights over all features.
    Soft(Vec<f64>),
    /// Exact coordinate projection.
    Hard(usize),
}

impl Selector {
    #[inline]
    pub fn apply(&self, x: &[f64]) -> f64 {
        match self {
            Selector::Soft(w) => dot(w, x),
            Selector::Hard(i) => x[*i],
        }
    }

    /// Selected feature if the selector is a projection.
    pub fn hard_index(&self) -> Option<usize> {
        match self {
            Selector::Hard(i) => Some(*i),
            Selector::Soft(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bank {
    Single,
    Pair,
}

/// Gate logits (held in the model's parameter store) plus temperatures and
/// hard-switch state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateBank {
    /// `C×D` single-gate logits.
    pub single_logits: ParamId,
    /// `2P×D` pair-gate logits; rows `2p` and `2p+1` belong to pair `p`.
    pub pair_logits: ParamId,
    pub num_single: usize,
    pub num_pair: usize,
    pub num_features: usize,
    pub alpha: f64,
    pub temp_single: f64,
    pub temp_pair: f64,
    pub hard_single: bool,
    pub hard_pair: bool,
}

impl GateBank {
    fn logits_row<'a>(&self, store: &'a ParamStore, bank: Bank, row: usize) -> &'a [f64] {
        match bank {
            Bank::Single => store.get(self.single_logits).row(row),
            Bank::Pair => store.get(self.pair_logits).row(row),
        }
    }

    pub fn temperature(&self, bank: Bank) -> f64 {
        match bank {
            Bank::Single => self.temp_single,
            Bank::Pair => self.temp_pair,
        }
    }

    pub fn is_hard(&self, bank: Bank) -> bool {
        match bank {
            Bank::Single => self.hard_single,
            Bank::Pair => self.hard_pair,
        }
    }

    fn rows(&self, bank: Bank) -> usize {
        match bank {
            Bank::Single => self.num_single,
            Bank::Pair => 2 * self.num_pair,
        }
    }

    /// Entmax weights of one logit row at the bank's current temperature,
    /// ignoring the hard-switch flag.
    pub fn soft_weights(&self, store: &ParamStore, bank: Bank, row: usize) -> Vec<f64> {
        let t = self.temperature(bank);
        let scaled: Vec<f64> = self.logits_row(store, bank, row).iter().map(|v| v / t).collect();
        entmax(&scaled, self.alpha)
    }

    /// Selector for every row of a bank.
    pub fn selectors(&self, store: &ParamStore, bank: Bank) -> Vec<Selector> {
        (0..self.rows(bank))
            .map(|r| {
                if self.is_hard(bank) {
                    Selector::Hard(argmax(self.logits_row(store, bank, r)))
                } else {
                    Selector::Soft(self.soft_weights(store, bank, r))
                }
            })
            .collect()
    }

    /// Feature selected by each row (argmax of its logits).
    pub fn selected_features(&self, store: &ParamStore, bank: Bank) -> Vec<usize> {
        (0..self.rows(bank))
            .map(|r| argmax(self.logits_row(store, bank, r)))
            .collect()
    }

    /// True when every row of the bank is one-hot within `tol` at the current
    /// temperature (always true for an empty or hard-switched bank).
    pub fn all_one_hot(&self, store: &ParamStore, bank: Bank, tol: f64) -> bool {
        if self.is_hard(bank) {
            return true;
        }
        (0..self.rows(bank)).all(|r| is_one_hot(&self.soft_weights(store, bank, r), tol))
    }

    /// True once both banks act as exact coordinate projections.
    pub fn is_valid_gam(&self) -> bool {
        (self.num_single == 0 || self.hard_single) && (self.num_pair == 0 || self.hard_pair)
    }

    /// Switches any remaining soft bank to exact argmax selection.
    pub fn force_hard(&mut self) {
        if self.num_single > 0 {
            self.hard_single = true;
        }
        if self.num_pair > 0 {
            self.hard_pair = true;
        }
    }
}

/// `s_c(x)` for every single gate.
pub fn gate_select_single(bank: &GateBank, store: &ParamStore, x: &[f64]) -> Vec<f64> {
    bank.selectors(store, Bank::Single).iter().map(|s| s.apply(x)).collect()
}

/// `s²_p(x)` for every pair gate.
pub fn gate_select_pair(bank: &GateBank, store: &ParamStore, x: &[f64]) -> Vec<(f64, f64)> {
    let sel = bank.selectors(store, Bank::Pair);
    sel.chunks(2).map(|s| (s[0].apply(x), s[1].apply(x))).collect()
}

/// Temperature decay settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub warmup_epochs: usize,
    pub temper_epochs_single: usize,
    pub temper_epochs_pair: usize,
    /// Fixed decay factor; derived from the tempering epochs when absent.
    pub epsilon: Option<f64>,
    pub hard_switch_tol: f64,
}

impl AnnealSchedule {
    pub fn validate(&self) -> Result<()> {
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::Config(format!("epsilon must lie in (0,1), got {e}")));
            }
        }
        if !(self.hard_switch_tol > 0.0) {
            return Err(Error::Config("hard_switch_tol must be positive".into()));
        }
        if self.temper_epochs_single == 0 || self.temper_epochs_pair == 0 {
            return Err(Error::Config("tempering epochs must be positive".into()));
        }
        Ok(())
    }

    /// Decay factor for a bank: `FINAL_TEMPERATURE^{1/temper_epochs}` unless
    /// overridden.
    pub fn epsilon(&self, bank: Bank) -> f64 {
        self.epsilon.unwrap_or_else(|| {
            let steps = match bank {
                Bank::Single => self.temper_epochs_single,
                Bank::Pair => self.temper_epochs_pair,
            };
            FINAL_TEMPERATURE.powf(1.0 / steps as f64)
        })
    }
}

/// What one annealing step did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AnnealEvent {
    pub decayed: Option<Bank>,
    pub switched: Option<Bank>,
}

/// One end-of-epoch annealing step.
///
/// Pair gates are annealed to a hard switch before the single-gate
/// temperature starts moving. Within a bank: if every gate is already
/// one-hot the bank hard-switches, otherwise its temperature is multiplied
/// by ε. Epochs before warmup are a no-op.
pub fn anneal_step(
    bank: &mut GateBank,
    store: &ParamStore,
    sched: &AnnealSchedule,
    epoch: usize,
) -> AnnealEvent {
    let mut event = AnnealEvent::default();
    if epoch < sched.warmup_epochs {
        return event;
    }
    let target = if bank.num_pair > 0 && !bank.hard_pair {
        Bank::Pair
    } else if bank.num_single > 0 && !bank.hard_single {
        Bank::Single
    } else {
        return event;
    };
    if bank.all_one_hot(store, target, sched.hard_switch_tol) {
        match target {
            Bank::Single => bank.hard_single = true,
            Bank::Pair => bank.hard_pair = true,
        }
        event.switched = Some(target);
    } else {
        let eps = sched.epsilon(target);
        match target {
            Bank::Single => bank.temp_single *= eps,
            Bank::Pair => bank.temp_pair *= eps,
        }
        event.decayed = Some(target);
    }
    event
}

/// Registers near-uniform logits for a new bank.
pub fn init_bank<R: rand::Rng>(
    store: &mut ParamStore,
    rng: &mut R,
    num_single: usize,
    num_pair: usize,
    num_features: usize,
    alpha: f64,
) -> GateBank {
    let mut draw = |rows: usize| {
        let data = (0..rows * num_features)
            .map(|_| rng.random_range(-0.01..0.01))
            .collect();
        Matrix::from_vec(rows, num_features, data).expect("sized above")
    };
    let single = draw(num_single);
    let pair = draw(2 * num_pair);
    GateBank {
        single_logits: store.register("gates.single", single),
        pair_logits: store.register("gates.pair", pair),
        num_single,
        num_pair,
        num_features,
        alpha,
        temp_single: 1.0,
        temp_pair: 1.0,
        hard_single: false,
        hard_pair: false,
    }
}
