//! Adam with encoder/head learning-rate groups, and reduce-on-plateau decay
//! driven by dev Micro-F1 and Macro-F1.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelParams, ParamGrads, ParamGroup};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("non-finite gradient in tensor {tensor} at index {index}: {value}")]
    NonFiniteGradient { tensor: usize, index: usize, value: f64 },
    #[error("gradient shapes do not match the parameters")]
    ShapeMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    first_moment: ModelParams,
    second_moment: ModelParams,
    pub step: u64,
    pub lr_encoder: f64,
    pub lr_head: f64,
}

impl OptimizerState {
    pub fn new(params: &ModelParams, lr_encoder: f64, lr_head: f64) -> Self {
        Self { first_moment: params.zeros_like(), second_moment: params.zeros_like(), step: 0, lr_encoder, lr_head }
    }

    pub fn lr(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Encoder => self.lr_encoder,
            ParamGroup::Head => self.lr_head,
        }
    }

    pub fn scale_lrs(&mut self, factor: f64) {
        self.lr_encoder *= factor;
        self.lr_head *= factor;
    }
}

/// One bias-corrected Adam update. Parameters are untouched when any
/// gradient is non-finite.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &ParamGrads,
    state: &mut OptimizerState,
    cfg: &AdamConfig,
) -> Result<(), OptimError> {
    if grads.dims() != params.dims() {
        return Err(OptimError::ShapeMismatch);
    }
    for (tensor, (g, _)) in grads.tensors().iter().enumerate() {
        if let Some((index, &value)) = g.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(OptimError::NonFiniteGradient { tensor, index, value });
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let (lr_enc, lr_head) = (state.lr_encoder, state.lr_head);

    let grads = grads.tensors();
    let m = state.first_moment.tensors_mut();
    let v = state.second_moment.tensors_mut();
    for ((((p, group), (g, _)), (m, _)), (v, _)) in params.tensors_mut().into_iter().zip(grads).zip(m).zip(v) {
        let lr = match group {
            ParamGroup::Encoder => lr_enc,
            ParamGroup::Head => lr_head,
        };
        for i in 0..p.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

/// How the two dev metrics combine into a stagnation signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlateauRule {
    /// Decay only when neither metric improved for `patience` epochs.
    #[default]
    Neither,
    /// Decay when either metric went `patience` epochs without improving.
    Either,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauConfig {
    pub patience: usize,
    pub factor: f64,
    pub rule: PlateauRule,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlateauState {
    best_micro: Option<f64>,
    best_macro: Option<f64>,
    since_micro: usize,
    since_macro: usize,
    since_any: usize,
}

impl PlateauState {
    /// Feeds one epoch's dev metrics; returns the factor to apply to the
    /// learning rates when a decay fires.
    pub fn observe(&mut self, micro: f64, macro_: f64, cfg: &PlateauConfig) -> Option<f64> {
        let up_micro = self.best_micro.is_none_or(|b| micro > b);
        let up_macro = self.best_macro.is_none_or(|b| macro_ > b);
        if up_micro {
            self.best_micro = Some(micro);
            self.since_micro = 0;
        } else {
            self.since_micro += 1;
        }
        if up_macro {
            self.best_macro = Some(macro_);
            self.since_macro = 0;
        } else {
            self.since_macro += 1;
        }
        if up_micro || up_macro {
            self.since_any = 0;
        } else {
            self.since_any += 1;
        }

        let stalled = match cfg.rule {
            PlateauRule::Neither => self.since_any >= cfg.patience,
            PlateauRule::Either => self.since_micro >= cfg.patience || self.since_macro >= cfg.patience,
        };
        if stalled {
            *self = PlateauState { best_micro: Some(micro), best_macro: Some(macro_), ..Default::default() };
            Some(cfg.factor)
        } else {
            None
        }
    }
}

/// Replays `history` of `(micro, macro)` pairs; returns the epochs at which
/// a decay fires.
pub fn plateau_scheduler(history: &[(f64, f64)], cfg: &PlateauConfig) -> Vec<usize> {
    let mut state = PlateauState::default();
    history.iter().enumerate().filter_map(|(ep, &(mi, ma))| state.observe(mi, ma, cfg).map(|_| ep)).collect()
}
