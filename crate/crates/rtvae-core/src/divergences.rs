//! Loss terms: standard categorical cross-entropy and Gaussian NLL, their
//! beta-cross-entropy robust counterparts, the Gaussian KL regularizer, and
//! the total per-batch objective.
//!
//! The robust categorical loss for a predicted probability vector `p` with
//! observed index `t` is
//!
//! ```text
//! H_beta = -((beta + 1) / beta) * (p[t]^beta - 1) + sum_k p[k]^(beta + 1)
//! ```
//!
//! and the continuous loss for residual `d = xhat - x` under a fixed-sigma
//! Gaussian likelihood is
//!
//! ```text
//! H_beta = ((beta + 1) / beta) * (1 - (2 pi sigma^2)^(-beta/2)
//!                                   * exp(-beta d^2 / (2 sigma^2)))
//! ```
//!
//! Both converge to their standard counterparts as beta -> 0 (the categorical
//! form converges to cross-entropy plus one). The continuous form is bounded
//! above by `(beta + 1) / beta`, so a single outlier's influence saturates
//! instead of growing without bound; that saturation is the robustness
//! mechanism. The additive constants have zero gradient either way.
//!
//! Losses are defined per sample and averaged over the batch, so magnitudes
//! do not depend on batch size. `beta = 0` selects the standard losses
//! exactly; no limit is evaluated.

use thiserror::Error;

use crate::model::{decode_forward, encode_forward, HeadNode, ModelParams, TapeBinding};
use crate::numerics::{reparameterize, Matrix, NodeId, NumericsError, Rng, Tape, PROB_FLOOR};

#[derive(Debug, Error)]
pub enum DivergenceError {
    #[error("beta {0} must be finite and in [0, 1]")]
    InvalidBeta(f64),
    #[error("target index {target} out of range for {categories} categories")]
    TargetOutOfRange { target: usize, categories: usize },
}

/// Robustness coefficient. Zero selects the standard KL-based losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Beta(f64);

impl Beta {
    pub const ZERO: Beta = Beta(0.0);

    pub fn new(value: f64) -> Result<Beta, DivergenceError> {
        if !value.is_finite() || !(0.0..=1.0).contains(&value) {
            return Err(DivergenceError::InvalidBeta(value));
        }
        Ok(Beta(value))
    }

    pub fn value(&self) -> f64 {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0 == 0.0
    }
}

/// Grid used by the experiments: 1e-5 to 0.1 in logarithmic steps.
pub fn default_beta_grid() -> Vec<Beta> {
    [1e-5, 1e-4, 1e-3, 1e-2, 1e-1]
        .into_iter()
        .map(|v| Beta::new(v).unwrap())
        .collect()
}

fn clamp_prob(p: f64) -> f64 {
    p.max(PROB_FLOOR)
}

/// `-log(clamp(probs[target]))`.
pub fn categorical_ce(probs: &[f64], target: usize) -> Result<f64, DivergenceError> {
    if target >= probs.len() {
        return Err(DivergenceError::TargetOutOfRange {
            target,
            categories: probs.len(),
        });
    }
    Ok(-clamp_prob(probs[target]).ln())
}

/// `0.5 ln(2 pi sigma^2) + (xhat - x)^2 / (2 sigma^2)`.
pub fn gaussian_nll(xhat: f64, x: f64, sigma: f64) -> f64 {
    debug_assert!(sigma > 0.0);
    let d = xhat - x;
    0.5 * (2.0 * std::f64::consts::PI * sigma * sigma).ln() + d * d / (2.0 * sigma * sigma)
}

/// Robust categorical loss; requires `beta > 0` (zero routes to
/// [`categorical_ce`] at the call site). Minimized over `probs` at the
/// one-hot of `target`, where it evaluates to one.
pub fn categorical_beta_ce(
    probs: &[f64],
    target: usize,
    beta: Beta,
) -> Result<f64, DivergenceError> {
    debug_assert!(!beta.is_zero(), "beta = 0 must route to categorical_ce");
    if target >= probs.len() {
        return Err(DivergenceError::TargetOutOfRange {
            target,
            categories: probs.len(),
        });
    }
    let b = beta.value();
    let p_target = clamp_prob(probs[target]);
    let term1 = -((b + 1.0) / b) * (p_target.powf(b) - 1.0);
    let term2: f64 = probs.iter().map(|&p| clamp_prob(p).powf(b + 1.0)).sum();
    Ok(term1 + term2)
}

/// Robust continuous loss; requires `beta > 0` (zero routes to
/// [`gaussian_nll`]). Nonnegative and bounded above by `(beta + 1) / beta`.
pub fn gaussian_beta_ce(xhat: f64, x: f64, sigma: f64, beta: Beta) -> f64 {
    debug_assert!(sigma > 0.0);
    debug_assert!(!beta.is_zero(), "beta = 0 must route to gaussian_nll");
    let b = beta.value();
    let d = xhat - x;
    let norm = (2.0 * std::f64::consts::PI * sigma * sigma).powf(-b / 2.0);
    let kernel = (-b * d * d / (2.0 * sigma * sigma)).exp();
    ((b + 1.0) / b) * (1.0 - norm * kernel)
}

/// Closed-form KL between a diagonal Gaussian posterior and the standard
/// normal prior: `0.5 sum(mu^2 + e^logvar - logvar - 1)`, mean over the
/// batch. Zero iff `mu = 0` and `logvar = 0`.
pub fn kl_gaussian_standard(mu: &Matrix, logvar: &Matrix) -> f64 {
    assert_eq!(mu.shape(), logvar.shape(), "kl shapes");
    let mut sum = 0.0;
    for (&m, &lv) in mu.data().iter().zip(logvar.data()) {
        sum += m * m + lv.exp() - lv - 1.0;
    }
    0.5 * sum / mu.rows() as f64
}

/// Per-batch loss components, each a batch mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub rec_categorical: f64,
    pub rec_continuous: f64,
    pub kl_regularizer: f64,
    pub total: f64,
}

/// The loss graph of one training step: breakdown values, the scalar total
/// node to run `backward` from, and the parameter binding for gradients.
pub struct LossGraph {
    pub breakdown: LossBreakdown,
    pub total: NodeId,
    pub binding: TapeBinding,
}

/// Builds the full objective on the tape for one batch: encode, draw one
/// latent sample per row, decode, apply the per-feature reconstruction branch
/// (robust when `beta > 0`, standard when `beta = 0`), add the KL
/// regularizer. All reconstruction terms are summed over features and
/// averaged over the batch.
pub fn total_loss(
    params: &ModelParams,
    batch: &Matrix,
    beta: Beta,
    rng: &mut Rng,
    tape: &mut Tape,
) -> Result<LossGraph, NumericsError> {
    let noise = rng.normal_matrix(batch.rows(), params.arch.latent_dim);
    total_loss_with_noise(params, batch, beta, &noise, tape)
}

/// [`total_loss`] with caller-supplied reparameterization noise; the seam the
/// finite-difference checks go through so noise stays fixed across
/// perturbations.
pub fn total_loss_with_noise(
    params: &ModelParams,
    batch: &Matrix,
    beta: Beta,
    noise: &Matrix,
    tape: &mut Tape,
) -> Result<LossGraph, NumericsError> {
    let arch = &params.arch;
    let rows = batch.rows();
    let binding = params.bind(tape)?;
    let x = tape.constant(batch.clone())?;

    let (mu, logvar) = encode_forward(tape, &binding, x)?;
    let noise = tape.constant(noise.clone())?;
    let z = reparameterize(tape, mu, logvar, noise)?;
    let heads = decode_forward(tape, &binding, arch, z)?;

    let sigma = arch.obs_sigma;
    let mut rec_categorical: Option<NodeId> = None;
    let mut rec_continuous: Option<NodeId> = None;

    for (col, head) in arch.feature_layout.iter().zip(&heads) {
        let target = tape.column_slice(x, col.offset, col.width)?;
        let feature_mean = match head {
            HeadNode::Categorical(probs) => {
                let per_row = if beta.is_zero() {
                    // -log p of the observed category via the one-hot mask
                    let logp = tape.log(*probs)?;
                    let masked = tape.multiply(target, logp)?;
                    let picked = tape.sum_rows(masked)?;
                    tape.negate(picked)?
                } else {
                    let b = beta.value();
                    let pow_b = tape.power(*probs, b)?;
                    let masked = tape.multiply(target, pow_b)?;
                    let p_target_pow = tape.sum_rows(masked)?;
                    let ones = tape.constant(Matrix::filled(rows, 1, 1.0))?;
                    let centered = tape.subtract(p_target_pow, ones)?;
                    let term1 = tape.scale(centered, -(b + 1.0) / b)?;
                    let pow_b1 = tape.power(*probs, b + 1.0)?;
                    let term2 = tape.sum_rows(pow_b1)?;
                    tape.add(term1, term2)?
                };
                let mean = tape.mean_all(per_row)?;
                accumulate_loss(tape, &mut rec_categorical, mean)?
            }
            HeadNode::Continuous(xhat) => {
                let diff = tape.subtract(*xhat, target)?;
                let sq = tape.square(diff)?;
                let per_row = if beta.is_zero() {
                    let scaled = tape.scale(sq, 1.0 / (2.0 * sigma * sigma))?;
                    let c = 0.5 * (2.0 * std::f64::consts::PI * sigma * sigma).ln();
                    let constant = tape.constant(Matrix::filled(rows, 1, c))?;
                    tape.add(scaled, constant)?
                } else {
                    let b = beta.value();
                    let norm = (2.0 * std::f64::consts::PI * sigma * sigma).powf(-b / 2.0);
                    let exponent = tape.scale(sq, -b / (2.0 * sigma * sigma))?;
                    let kernel = tape.exp(exponent)?;
                    let weighted = tape.scale(kernel, -((b + 1.0) / b) * norm)?;
                    let constant = tape.constant(Matrix::filled(rows, 1, (b + 1.0) / b))?;
                    tape.add(weighted, constant)?
                };
                let mean = tape.mean_all(per_row)?;
                accumulate_loss(tape, &mut rec_continuous, mean)?
            }
        };
        let _ = feature_mean;
    }

    let rec_cat = ensure_scalar(tape, rec_categorical)?;
    let rec_cont = ensure_scalar(tape, rec_continuous)?;

    // KL regularizer: 0.5 * sum(mu^2 + e^lv - lv - 1) / batch
    let mu_sq = tape.square(mu)?;
    let ev = tape.exp(logvar)?;
    let summed = tape.add(mu_sq, ev)?;
    let minus_lv = tape.subtract(summed, logvar)?;
    let ones = tape.constant(Matrix::filled(rows, arch.latent_dim, 1.0))?;
    let inner = tape.subtract(minus_lv, ones)?;
    let kl_sum = tape.sum_all(inner)?;
    let kl = tape.scale(kl_sum, 0.5 / rows as f64)?;

    let rec = tape.add(rec_cat, rec_cont)?;
    let total = tape.add(rec, kl)?;

    let breakdown = LossBreakdown {
        rec_categorical: tape.value(rec_cat).get(0, 0),
        rec_continuous: tape.value(rec_cont).get(0, 0),
        kl_regularizer: tape.value(kl).get(0, 0),
        total: tape.value(total).get(0, 0),
    };
    Ok(LossGraph {
        breakdown,
        total,
        binding,
    })
}

fn accumulate_loss(
    tape: &mut Tape,
    slot: &mut Option<NodeId>,
    term: NodeId,
) -> Result<NodeId, NumericsError> {
    let combined = match slot.take() {
        Some(present) => tape.add(present, term)?,
        None => term,
    };
    *slot = Some(combined);
    Ok(combined)
}

fn ensure_scalar(tape: &mut Tape, slot: Option<NodeId>) -> Result<NodeId, NumericsError> {
    match slot {
        Some(id) => Ok(id),
        None => tape.constant(Matrix::zeros(1, 1)),
    }
}
