//! Training objectives with logit-space gradients.
//!
//! * BCE over the head's sigmoid outputs.
//! * Local contrastive loss: a softmax over one positive and its hard
//!   negatives, every other label masked out.
//! * Hierarchical local contrastive loss: the sum of local terms over the
//!   curriculum-selected positives of a document.
//! * Recursive regularization over parent/child head rows (baseline).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::LabelMask;
use crate::model::{sigmoid, Matrix};
use crate::sampling::{hilearn_targets, NegativeIndex, SamplingError, ScheduleConfig};
use crate::taxonomy::{LabelId, LabelSet, Taxonomy};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LossError {
    #[error("positive label {0} appears in its own hard-negative set")]
    PositiveInHardSet(LabelId),
    #[error("positive-only BCE needs at least one positive label")]
    EmptyPositives,
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BceMode {
    /// Mean over all labels of the two-sided binary cross-entropy.
    #[default]
    Standard,
    /// Mean over positives of `-log sigmoid(z)` only.
    LiteralPositiveOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LclSpace {
    /// Softmax directly over logits.
    #[default]
    Logit,
    /// Softmax over sigmoid probabilities.
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub lambda: f64,
    pub bce_mode: BceMode,
    pub lcl_space: LclSpace,
    pub rec_reg_weight: f64,
    /// Divide the contrastive sum by the number of active targets.
    pub hilcl_mean: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-2,
            bce_mode: BceMode::Standard,
            lcl_space: LclSpace::Logit,
            rec_reg_weight: 0.0,
            hilcl_mean: false,
        }
    }
}

/// One local contrastive term and its sparse logit gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LclTerm {
    pub loss: f64,
    pub grad: Vec<(LabelId, f64)>,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Contrast positive `label` against `hard`.
pub fn lcl_loss(logits: &[f64], label: LabelId, hard: &LabelMask, space: LclSpace) -> Result<LclTerm, LossError> {
    if hard.contains(label) {
        return Err(LossError::PositiveInHardSet(label));
    }
    if hard.is_empty() {
        return Ok(LclTerm { loss: 0.0, grad: Vec::new() });
    }
    let members: Vec<LabelId> = std::iter::once(label).chain(hard.iter()).collect();
    let scores: Vec<f64> = members
        .iter()
        .map(|&j| match space {
            LclSpace::Logit => logits[j],
            LclSpace::Sigmoid => sigmoid(logits[j]),
        })
        .collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() - (scores[0] - max);
    let grad = members
        .iter()
        .zip(&exps)
        .enumerate()
        .map(|(pos, (&j, e))| {
            let mut g = e / sum;
            if pos == 0 {
                g -= 1.0;
            }
            if space == LclSpace::Sigmoid {
                let s = sigmoid(logits[j]);
                g *= s * (1.0 - s);
            }
            (j, g)
        })
        .collect();
    Ok(LclTerm { loss, grad })
}

/// Contrastive term summed over the curriculum targets of one document.
#[derive(Debug, Clone, PartialEq)]
pub struct HilclTerm {
    pub loss: f64,
    pub grad_logits: Vec<f64>,
    pub active_targets: LabelSet,
}

/// `key` seeds random-negative draws and is ignored by structural modes.
#[allow(clippy::too_many_arguments)]
pub fn hilcl_loss(
    logits: &[f64],
    positives: &LabelSet,
    epoch: usize,
    sched: &ScheduleConfig,
    index: &NegativeIndex,
    tax: &Taxonomy,
    space: LclSpace,
    key: u64,
) -> Result<HilclTerm, LossError> {
    let targets = hilearn_targets(tax, positives, epoch, sched);
    let mut grad_logits = vec![0.0; logits.len()];
    let mut loss = 0.0;
    for y in targets.iter() {
        let hard = index.hard_negatives(y, positives, key)?;
        let term = lcl_loss(logits, y, &hard, space)?;
        loss += term.loss;
        for (j, g) in term.grad {
            grad_logits[j] += g;
        }
    }
    Ok(HilclTerm { loss, grad_logits, active_targets: targets })
}

pub fn bce_loss(logits: &[f64], positives: &LabelSet, mode: BceMode) -> Result<(f64, Vec<f64>), LossError> {
    let c = logits.len();
    match mode {
        BceMode::Standard => {
            let inv = 1.0 / c as f64;
            let mut loss = 0.0;
            let grad = logits
                .iter()
                .enumerate()
                .map(|(i, &z)| {
                    let t = if positives.contains(i) { 1.0 } else { 0.0 };
                    // -[t log s + (1-t) log(1-s)] = t*softplus(-z) + (1-t)*softplus(z)
                    loss += if t == 1.0 { softplus(-z) } else { softplus(z) };
                    (sigmoid(z) - t) * inv
                })
                .collect();
            Ok((loss * inv, grad))
        }
        BceMode::LiteralPositiveOnly => {
            if positives.is_empty() {
                return Err(LossError::EmptyPositives);
            }
            let inv = 1.0 / positives.len() as f64;
            let mut grad = vec![0.0; c];
            let mut loss = 0.0;
            for i in positives.iter() {
                loss += softplus(-logits[i]);
                grad[i] = (sigmoid(logits[i]) - 1.0) * inv;
            }
            Ok((loss * inv, grad))
        }
    }
}

/// `1/2 * sum over (parent, child) edges of |W_p - W_c|^2`; edges into the
/// root are skipped since the root has no row.
pub fn recursive_regularization(head_weight: &Matrix, tax: &Taxonomy) -> (f64, Matrix) {
    let mut grad = Matrix::zeros(head_weight.rows(), head_weight.cols());
    let mut loss = 0.0;
    for (p, c) in tax.edges() {
        for k in 0..head_weight.cols() {
            let d = head_weight.get(p, k) - head_weight.get(c, k);
            loss += 0.5 * d * d;
            grad.set(p, k, grad.get(p, k) + d);
            grad.set(c, k, grad.get(c, k) - d);
        }
    }
    (loss, grad)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub bce: f64,
    pub hilcl: f64,
    pub rec_reg: f64,
    pub total: f64,
    #[serde(skip)]
    pub grad_logits: Vec<f64>,
    /// `rec_reg_weight * d(rec_reg)/dW`; `None` when the weight is zero.
    #[serde(skip)]
    pub grad_head_weight: Option<Matrix>,
    pub active_targets: Vec<LabelId>,
}

/// Everything `total_loss` needs besides the per-document inputs.
pub struct Objective<'a> {
    pub cfg: &'a LossConfig,
    pub sched: &'a ScheduleConfig,
    pub index: &'a NegativeIndex,
    pub tax: &'a Taxonomy,
}

/// `bce + lambda * hilcl + rec_reg_weight * rec_reg`.
pub fn total_loss(
    logits: &[f64],
    positives: &LabelSet,
    epoch: usize,
    obj: &Objective<'_>,
    head_weight: &Matrix,
    key: u64,
) -> Result<LossBreakdown, LossError> {
    let cfg = obj.cfg;
    let (bce, mut grad_logits) = bce_loss(logits, positives, cfg.bce_mode)?;

    let (mut hilcl, mut active) = (0.0, Vec::new());
    if cfg.lambda > 0.0 {
        let term = hilcl_loss(logits, positives, epoch, obj.sched, obj.index, obj.tax, cfg.lcl_space, key)?;
        let scale = if cfg.hilcl_mean && !term.active_targets.is_empty() {
            1.0 / term.active_targets.len() as f64
        } else {
            1.0
        };
        hilcl = term.loss * scale;
        for (g, h) in grad_logits.iter_mut().zip(&term.grad_logits) {
            *g += cfg.lambda * scale * h;
        }
        active = term.active_targets.as_slice().to_vec();
    }

    let (mut rec_reg, mut grad_head_weight) = (0.0, None);
    if cfg.rec_reg_weight > 0.0 {
        let (loss, mut grad) = recursive_regularization(head_weight, obj.tax);
        grad.as_mut_slice().iter_mut().for_each(|g| *g *= cfg.rec_reg_weight);
        rec_reg = loss;
        grad_head_weight = Some(grad);
    }

    Ok(LossBreakdown {
        bce,
        hilcl,
        rec_reg,
        total: bce + cfg.lambda * hilcl + cfg.rec_reg_weight * rec_reg,
        grad_logits,
        grad_head_weight,
        active_targets: active,
    })
}
