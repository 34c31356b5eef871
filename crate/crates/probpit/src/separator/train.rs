//! Mini-batch training with Adam and a validation-driven learning-rate
//! schedule. Runs are fully reproducible: shuffling, initialization, and
//! dropout all derive from explicit seeds, and gradients accumulate in a
//! fixed order regardless of how the work is scheduled.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{backward, estimate_sources, forward, ForwardMode, SeparatorModel};
use crate::dsp::MagSpectrogram;
use crate::error::{Error, Result};
use crate::loss::{prob_pit_grad_from_costs, prob_pit_loss, Gamma};
use crate::perm::{pairwise_costs, permutation_costs};

/// Which objective drives the gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Hard minimum over permutations (gamma = 0).
    Pit,
    /// Soft minimum with the configured gamma.
    ProbPit,
}

impl LossKind {
    pub fn label(&self) -> &'static str {
        match self {
            LossKind::Pit => "pit",
            LossKind::ProbPit => "prob_pit",
        }
    }
}

/// Optimizer and schedule hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    /// Multiplier applied when validation improvement stalls.
    pub lr_decay: f64,
    /// Number of successive stalled epochs before decaying.
    pub decay_patience: usize,
    /// Minimum epoch-over-epoch validation improvement that counts as
    /// progress (absolute, on the normalized loss scale).
    pub decay_threshold: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub gamma: Gamma,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            lr_decay: 0.7,
            decay_patience: 2,
            decay_threshold: 0.003,
            epochs: 50,
            batch_size: 32,
            gamma: Gamma::ZERO,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        // lr = 0 is allowed: it freezes the parameters, which the tests use.
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::InvalidArgument(format!("lr must be >= 0, got {}", self.lr)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "lr_decay must be in (0, 1), got {}",
                self.lr_decay
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// One featurized utterance: mixture magnitude plus per-source targets.
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub mixture_mag: MagSpectrogram,
    pub target_mags: Vec<MagSpectrogram>,
}

/// Loss bookkeeping for one epoch. Losses are normalized per
/// time-frequency entry (raw summed squared error divided by
/// `S * bins * frames`) so they are comparable across utterance lengths;
/// gamma itself always acts on the raw summed scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate in effect during this epoch.
    pub lr: f64,
    /// True when the schedule cut the rate at the end of this epoch.
    pub lr_reduced: bool,
}

#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

/// Per-utterance permutation costs observed during training, in the raw
/// (unnormalized) scale of the objective.
pub struct CostRecord<'a> {
    pub epoch: usize,
    pub item_index: usize,
    pub costs: &'a [f64],
}

/// Adam with the usual bias correction. The state lives outside the
/// model so a model can be trained, checkpointed, and trained again.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    pub fn new(num_params: usize) -> Self {
        Self { m: vec![0.0; num_params], v: vec![0.0; num_params], t: 0 }
    }

    /// One update: `p -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, model: &mut SeparatorModel, grad: &[f64], lr: f64) -> Result<()> {
        if grad.len() != self.m.len() {
            return Err(Error::Shape("gradient length does not match optimizer state".into()));
        }
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        let mut delta = vec![0.0; grad.len()];
        for i in 0..grad.len() {
            let g = grad[i];
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            delta[i] = -lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
        model.apply_update(&delta)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Dropout stream for one (seed, epoch, item) triple; independent of the
/// shuffle order so schedules never perturb the masks.
fn dropout_rng(seed: u64, epoch: usize, item_index: usize) -> ChaCha8Rng {
    let mixed = splitmix64(seed ^ splitmix64(epoch as u64 ^ splitmix64(item_index as u64)));
    ChaCha8Rng::seed_from_u64(mixed)
}

fn item_norm(item: &TrainItem) -> f64 {
    let (bins, frames) = item.mixture_mag.shape();
    1.0 / (item.target_mags.len() as f64 * bins as f64 * frames as f64)
}

fn effective_gamma(tc: &TrainConfig, kind: LossKind) -> Gamma {
    match kind {
        LossKind::Pit => Gamma::ZERO,
        LossKind::ProbPit => tc.gamma,
    }
}

/// Mean normalized validation loss under eval-mode forwards.
fn validation_loss(model: &SeparatorModel, val_set: &[TrainItem], gamma: Gamma) -> Result<f64> {
    let mut total = 0.0;
    for item in val_set {
        let (masks, _) = forward(model, &item.mixture_mag, ForwardMode::Eval)?;
        let estimates = estimate_sources(&masks, &item.mixture_mag)?;
        let pc = permutation_costs(&pairwise_costs(&estimates, &item.target_mags)?)?;
        total += prob_pit_loss(&pc, gamma)?.loss * item_norm(item);
    }
    Ok(total / val_set.len() as f64)
}

/// Trains in place and returns the per-epoch history.
pub fn train(
    model: &mut SeparatorModel,
    train_set: &[TrainItem],
    val_set: &[TrainItem],
    tc: &TrainConfig,
    kind: LossKind,
) -> Result<TrainHistory> {
    train_with_observer(model, train_set, val_set, tc, kind, &mut |_| {})
}

/// As [`train`], invoking `observer` with the permutation costs of every
/// utterance as it is consumed (used by the cost-gap study and the gamma
/// calibration).
pub fn train_with_observer(
    model: &mut SeparatorModel,
    train_set: &[TrainItem],
    val_set: &[TrainItem],
    tc: &TrainConfig,
    kind: LossKind,
    observer: &mut dyn FnMut(CostRecord<'_>),
) -> Result<TrainHistory> {
    tc.validate()?;
    if train_set.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    if val_set.is_empty() {
        return Err(Error::Data("validation split is empty".into()));
    }
    let gamma = effective_gamma(tc, kind);
    let num_sources = model.config().num_sources;
    for item in train_set.iter().chain(val_set) {
        if item.target_mags.len() != num_sources {
            return Err(Error::Shape(format!(
                "item has {} targets, model separates {num_sources}",
                item.target_mags.len()
            )));
        }
    }

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut adam = Adam::new(model.num_params());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = TrainHistory::default();
    let mut lr = tc.lr;
    let mut prev_val: Option<f64> = None;
    let mut stalled = 0usize;

    for epoch in 1..=tc.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;

        for (batch_no, batch) in order.chunks(tc.batch_size).enumerate() {
            let mut batch_grad = vec![0.0f64; model.num_params()];
            let mut batch_loss = 0.0;
            for &item_index in batch {
                let item = &train_set[item_index];
                let mut rng = dropout_rng(tc.seed, epoch, item_index);
                let (masks, cache) =
                    forward(model, &item.mixture_mag, ForwardMode::Train { dropout_rng: &mut rng })?;
                let estimates = estimate_sources(&masks, &item.mixture_mag)?;
                let pc = permutation_costs(&pairwise_costs(&estimates, &item.target_mags)?)?;
                observer(CostRecord { epoch, item_index, costs: &pc.costs });
                let loss_res =
                    prob_pit_grad_from_costs(&pc, &estimates, &item.target_mags, gamma)?;
                let param_grad = backward(model, &cache, &loss_res.grad)?;

                let norm = item_norm(item);
                for (acc, g) in batch_grad.iter_mut().zip(&param_grad) {
                    *acc += g * norm;
                }
                batch_loss += loss_res.loss * norm;
            }
            let inv = 1.0 / batch.len() as f64;
            batch_loss *= inv;
            if !batch_loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "training diverged: non-finite loss at epoch {epoch}, batch {batch_no}"
                )));
            }
            for g in batch_grad.iter_mut() {
                *g *= inv;
            }
            adam.step(model, &batch_grad, lr)?;
            epoch_loss += batch_loss * batch.len() as f64;
        }

        let train_loss = epoch_loss / train_set.len() as f64;
        let val_loss = validation_loss(model, val_set, gamma)?;
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "training diverged: non-finite validation loss at epoch {epoch}"
            )));
        }

        let lr_used = lr;
        let mut reduced = false;
        if let Some(prev) = prev_val {
            if prev - val_loss < tc.decay_threshold {
                stalled += 1;
            } else {
                stalled = 0;
            }
            if stalled >= tc.decay_patience {
                lr *= tc.lr_decay;
                stalled = 0;
                reduced = true;
            }
        }
        prev_val = Some(val_loss);
        history.epochs.push(EpochStats { epoch, train_loss, val_loss, lr: lr_used, lr_reduced: reduced });
    }
    Ok(history)
}
