//! Separation objectives over the permutation lattice.
//!
//! `pit_loss` trains on the single minimum-cost assignment. The
//! probabilistic variant treats the assignment as a latent variable with
//! a uniform prior and maximizes the marginal likelihood, which reduces
//! to a soft minimum of the per-permutation costs with smoothing factor
//! gamma:
//!
//! ```text
//! loss = g_min - gamma * ln(1 + sum_{k != min} exp((g_min - g_k) / gamma))
//! ```
//!
//! Every exponent is nonpositive, so the evaluation cannot overflow for
//! any finite costs. `gamma = 0` is an exact special case equal to PIT,
//! not a small-gamma approximation.

use ndarray::Array2;

use crate::dsp::MagSpectrogram;
use crate::error::{Error, Result};
use crate::perm::{pairwise_costs, permutation_costs, PermutationCosts};

/// Smoothing factor, `gamma = 2 * sigma^2` of the estimation-error
/// variance. Zero selects the exact-PIT path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gamma(f64);

impl Gamma {
    pub const ZERO: Gamma = Gamma(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "gamma must be finite and nonnegative, got {value}"
            )));
        }
        Ok(Self(value))
    }

    /// From the estimation-error variance: `gamma = 2 * sigma^2`.
    pub fn from_sigma2(sigma2: f64) -> Result<Self> {
        if !sigma2.is_finite() || sigma2 <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "sigma^2 must be finite and positive, got {sigma2}"
            )));
        }
        Self::new(2.0 * sigma2)
    }

    pub fn value(&self) -> f64 {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0 == 0.0
    }
}

/// Loss value, posterior permutation weights, and (when computed through
/// [`prob_pit_grad`]) the gradient with respect to each separator output.
#[derive(Debug, Clone)]
pub struct LossResult {
    /// Negative log-likelihood up to its parameter-free constant.
    pub loss: f64,
    /// Posterior weight of each permutation; sums to one.
    pub weights: Vec<f64>,
    /// d loss / d output, one signed matrix per output. Empty when the
    /// result was computed from costs alone.
    pub grad: Vec<Array2<f64>>,
    /// Index of the minimum-cost permutation.
    pub min_index: usize,
}

/// Soft minimum `-gamma * ln(sum_i exp(-v_i / gamma))` in shifted form;
/// `gamma = 0` returns the exact minimum.
pub fn softmin(values: &[f64], gamma: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("softmin of an empty list".into()));
    }
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::InvalidArgument(format!("gamma must be >= 0, got {gamma}")));
    }
    if !values.iter().all(|v| v.is_finite()) {
        return Err(Error::Data("softmin input contains non-finite values".into()));
    }
    let mut min_idx = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[min_idx] {
            min_idx = i;
        }
    }
    let m = values[min_idx];
    if gamma == 0.0 {
        return Ok(m);
    }
    // ln1p keeps the soft/hard gap resolvable even when the shifted
    // exponentials drop below machine epsilon
    let rest: f64 = values
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != min_idx)
        .map(|(_, v)| ((m - v) / gamma).exp())
        .sum();
    Ok(m - gamma * rest.ln_1p())
}

/// Conventional PIT: the cost of the best assignment, one-hot weights.
pub fn pit_loss(pc: &PermutationCosts) -> LossResult {
    let mut weights = vec![0.0; pc.costs.len()];
    weights[pc.min_index] = 1.0;
    LossResult { loss: pc.min_cost(), weights, grad: Vec::new(), min_index: pc.min_index }
}

/// Soft-minimum loss over all permutation costs. Posterior weights are
/// the softmax of `-costs / gamma`, evaluated through the same shifted
/// exponentials as the loss.
pub fn prob_pit_loss(pc: &PermutationCosts, gamma: Gamma) -> Result<LossResult> {
    if !pc.costs.iter().all(|c| c.is_finite()) {
        return Err(Error::Data("permutation costs contain non-finite values".into()));
    }
    if gamma.is_zero() {
        return Ok(pit_loss(pc));
    }
    let g = gamma.value();
    let g_min = pc.min_cost();
    let exps: Vec<f64> = pc.costs.iter().map(|c| ((g_min - c) / g).exp()).collect();
    // exps[min_index] is exactly 1; summing the rest and using ln1p keeps
    // the soft/hard gap resolvable when the other terms are tiny
    let rest: f64 =
        exps.iter().enumerate().filter(|(k, _)| *k != pc.min_index).map(|(_, e)| e).sum();
    let loss = g_min - g * rest.ln_1p();
    let z = 1.0 + rest;
    let weights = exps.iter().map(|e| e / z).collect();
    Ok(LossResult { loss, weights, grad: Vec::new(), min_index: pc.min_index })
}

/// Full loss evaluation against targets: permutation costs, posterior
/// weights, loss, and the analytic gradient
/// `d loss / d O_o = 2 * (O_o - sum_k w_k * X_{perm_k(o)})`,
/// the weight-mixed blend of every permutation's squared-error gradient.
pub fn prob_pit_grad(
    outputs: &[MagSpectrogram],
    targets: &[MagSpectrogram],
    gamma: Gamma,
) -> Result<LossResult> {
    let pc = permutation_costs(&pairwise_costs(outputs, targets)?)?;
    prob_pit_grad_from_costs(&pc, outputs, targets, gamma)
}

/// Gradient assembly when the permutation costs of these outputs and
/// targets are already on hand (the training loop computes them once for
/// both the observer and the loss).
pub fn prob_pit_grad_from_costs(
    pc: &PermutationCosts,
    outputs: &[MagSpectrogram],
    targets: &[MagSpectrogram],
    gamma: Gamma,
) -> Result<LossResult> {
    let mut result = prob_pit_loss(pc, gamma)?;

    let shape = outputs[0].mags.dim();
    let mut grad = Vec::with_capacity(outputs.len());
    for (o, out) in outputs.iter().enumerate() {
        let mut blended = Array2::<f64>::zeros(shape);
        for (k, perm) in pc.perms.iter().enumerate() {
            let w = result.weights[k];
            if w == 0.0 {
                continue;
            }
            blended.scaled_add(w, &targets[perm.target_of(o)].mags);
        }
        let mut g = out.mags.clone();
        g -= &blended;
        g *= 2.0;
        grad.push(g);
    }
    result.grad = grad;
    Ok(result)
}
