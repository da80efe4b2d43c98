//! Text encoder and multi-label classification head.
//!
//! ```text
//! token ids -> mean of embedding rows -> tanh(A m + c) = h
//!           -> dropout -> z = W h + b -> P = sigmoid(z)
//! ```
//!
//! A precomputed document vector can stand in for `h` directly, in which
//! case only the head is trained.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::LabelId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("document has no tokens")]
    EmptyDocument,
    #[error("token id {token} is outside the vocabulary of size {vocab}")]
    TokenOutOfVocab { token: usize, vocab: usize },
    #[error("expected a vector of length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("shape mismatch in {0}")]
    ShapeMismatch(&'static str),
    #[error("threshold must lie strictly between 0 and 1, got {0}")]
    InvalidThreshold(f64),
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `self * x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// `self^T * y`
    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            if yr != 0.0 {
                axpy(&mut out, yr, self.row(r));
            }
        }
        out
    }

    /// `self += scale * u v^T`
    pub fn add_outer(&mut self, scale: f64, u: &[f64], v: &[f64]) {
        for (r, &ur) in u.iter().enumerate() {
            if ur != 0.0 {
                axpy(self.row_mut(r), scale * ur, v);
            }
        }
    }

    fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub num_labels: usize,
}

impl ModelDims {
    pub fn param_count(&self) -> usize {
        param_count(self.vocab_size, self.embed_dim, self.hidden_dim, self.num_labels)
    }
}

/// Trainable scalars: `V*d_e + d_h*d_e + d_h + C*d_h + C`.
pub fn param_count(vocab: usize, embed_dim: usize, hidden_dim: usize, num_labels: usize) -> usize {
    encoder_param_count(vocab, embed_dim, hidden_dim) + head_param_count(hidden_dim, num_labels)
}

pub fn encoder_param_count(vocab: usize, embed_dim: usize, hidden_dim: usize) -> usize {
    vocab * embed_dim + hidden_dim * embed_dim + hidden_dim
}

/// Head share `(d_h + 1) * C`.
pub fn head_param_count(hidden_dim: usize, num_labels: usize) -> usize {
    (hidden_dim + 1) * num_labels
}

/// Parameter groups with separate learning rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Encoder,
    Head,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub embeddings: Matrix,
    pub enc_weight: Matrix,
    pub enc_bias: Vec<f64>,
    pub head_weight: Matrix,
    pub head_bias: Vec<f64>,
}

/// Gradients share the parameter layout.
pub type ParamGrads = ModelParams;

impl ModelParams {
    pub fn zeros(dims: ModelDims) -> Self {
        let params = Self {
            embeddings: Matrix::zeros(dims.vocab_size, dims.embed_dim),
            enc_weight: Matrix::zeros(dims.hidden_dim, dims.embed_dim),
            enc_bias: vec![0.0; dims.hidden_dim],
            head_weight: Matrix::zeros(dims.num_labels, dims.hidden_dim),
            head_bias: vec![0.0; dims.num_labels],
        };
        assert_eq!(params.num_scalars(), dims.param_count());
        params
    }

    /// Uniform Glorot-style initialization; biases start at zero.
    pub fn init<R: Rng>(dims: ModelDims, rng: &mut R) -> Self {
        let mut p = Self::zeros(dims);
        let fill = |m: &mut Matrix, scale: f64, rng: &mut R| {
            for v in m.as_mut_slice() {
                *v = rng.random_range(-scale..scale);
            }
        };
        fill(&mut p.embeddings, 1.0, rng);
        let enc_scale = (6.0 / (dims.embed_dim + dims.hidden_dim) as f64).sqrt();
        fill(&mut p.enc_weight, enc_scale, rng);
        let head_scale = (6.0 / (dims.hidden_dim + dims.num_labels) as f64).sqrt();
        fill(&mut p.head_weight, head_scale, rng);
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.dims())
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            vocab_size: self.embeddings.rows(),
            embed_dim: self.embeddings.cols(),
            hidden_dim: self.enc_weight.rows(),
            num_labels: self.head_weight.rows(),
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|(t, _)| t.len()).sum()
    }

    /// Checks that every tensor agrees with the embedding/encoder/head dims.
    pub fn check_shapes(&self) -> Result<(), ModelError> {
        let d = self.dims();
        if self.enc_weight.shape() != (d.hidden_dim, d.embed_dim) {
            return Err(ModelError::ShapeMismatch("enc_weight"));
        }
        if self.enc_bias.len() != d.hidden_dim {
            return Err(ModelError::ShapeMismatch("enc_bias"));
        }
        if self.head_weight.cols() != d.hidden_dim {
            return Err(ModelError::ShapeMismatch("head_weight"));
        }
        if self.head_bias.len() != d.num_labels {
            return Err(ModelError::ShapeMismatch("head_bias"));
        }
        Ok(())
    }

    pub fn tensors(&self) -> [(&[f64], ParamGroup); 5] {
        [
            (self.embeddings.as_slice(), ParamGroup::Encoder),
            (self.enc_weight.as_slice(), ParamGroup::Encoder),
            (&self.enc_bias, ParamGroup::Encoder),
            (self.head_weight.as_slice(), ParamGroup::Head),
            (&self.head_bias, ParamGroup::Head),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&mut [f64], ParamGroup); 5] {
        [
            (self.embeddings.as_mut_slice(), ParamGroup::Encoder),
            (self.enc_weight.as_mut_slice(), ParamGroup::Encoder),
            (&mut self.enc_bias, ParamGroup::Encoder),
            (self.head_weight.as_mut_slice(), ParamGroup::Head),
            (&mut self.head_bias, ParamGroup::Head),
        ]
    }

    pub fn fill_zero(&mut self) {
        for (t, _) in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(t, _)| t.iter().all(|v| v.is_finite()))
    }
}

/// Everything a forward pass computed, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub token_ids: Vec<usize>,
    pub mean_embedding: Vec<f64>,
    /// Encoder output before dropout.
    pub hidden: Vec<f64>,
    /// Per-unit dropout multiplier: 0 or `1 / (1 - rate)`; all ones in eval.
    pub dropout_mask: Vec<f64>,
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
    /// Set when `hidden` came from a precomputed feature.
    pub precomputed: bool,
}

/// Training-mode dropout settings for a forward pass.
pub struct Dropout<'a, R: Rng> {
    pub rate: f64,
    pub rng: &'a mut R,
}

fn dropout_mask<R: Rng>(dim: usize, dropout: Option<Dropout<'_, R>>) -> Vec<f64> {
    match dropout {
        Some(Dropout { rate, rng }) if rate > 0.0 => {
            let keep = 1.0 / (1.0 - rate);
            (0..dim).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect()
        }
        _ => vec![1.0; dim],
    }
}

const PROB_FLOOR: f64 = 1e-15;

fn head_forward(params: &ModelParams, hidden: &[f64], mask: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let dropped: Vec<f64> = hidden.iter().zip(mask).map(|(h, m)| h * m).collect();
    let mut logits = params.head_weight.matvec(&dropped);
    for (z, b) in logits.iter_mut().zip(&params.head_bias) {
        *z += b;
    }
    let probs = logits.iter().map(|&z| sigmoid(z).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)).collect();
    (logits, probs)
}

/// Forward pass over token ids. Pass `None` for evaluation mode.
pub fn encode<R: Rng>(
    params: &ModelParams,
    token_ids: &[usize],
    dropout: Option<Dropout<'_, R>>,
) -> Result<ForwardTrace, ModelError> {
    if token_ids.is_empty() {
        return Err(ModelError::EmptyDocument);
    }
    let vocab = params.embeddings.rows();
    if let Some(&bad) = token_ids.iter().find(|&&t| t >= vocab) {
        return Err(ModelError::TokenOutOfVocab { token: bad, vocab });
    }
    let mut mean = vec![0.0; params.embeddings.cols()];
    for &t in token_ids {
        axpy(&mut mean, 1.0, params.embeddings.row(t));
    }
    let inv_n = 1.0 / token_ids.len() as f64;
    mean.iter_mut().for_each(|v| *v *= inv_n);

    let mut hidden = params.enc_weight.matvec(&mean);
    for (h, c) in hidden.iter_mut().zip(&params.enc_bias) {
        *h = (*h + c).tanh();
    }
    let mask = dropout_mask(hidden.len(), dropout);
    let (logits, probabilities) = head_forward(params, &hidden, &mask);
    Ok(ForwardTrace {
        token_ids: token_ids.to_vec(),
        mean_embedding: mean,
        hidden,
        dropout_mask: mask,
        logits,
        probabilities,
        precomputed: false,
    })
}

/// Forward pass from an externally produced hidden vector.
pub fn encode_precomputed<R: Rng>(
    params: &ModelParams,
    feature: &[f64],
    dropout: Option<Dropout<'_, R>>,
) -> Result<ForwardTrace, ModelError> {
    let d_h = params.enc_weight.rows();
    if feature.len() != d_h {
        return Err(ModelError::DimensionMismatch { expected: d_h, got: feature.len() });
    }
    let mask = dropout_mask(d_h, dropout);
    let (logits, probabilities) = head_forward(params, feature, &mask);
    Ok(ForwardTrace {
        token_ids: Vec::new(),
        mean_embedding: Vec::new(),
        hidden: feature.to_vec(),
        dropout_mask: mask,
        logits,
        probabilities,
        precomputed: true,
    })
}

/// Evaluation-mode forward pass with no generator.
pub fn encode_eval(params: &ModelParams, token_ids: &[usize]) -> Result<ForwardTrace, ModelError> {
    encode::<rand_chacha::ChaCha8Rng>(params, token_ids, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictConfig {
    pub threshold: f64,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self { threshold: 0.5 }
    }
}

impl PredictConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.threshold > 0.0 && self.threshold < 1.0 {
            Ok(())
        } else {
            Err(ModelError::InvalidThreshold(self.threshold))
        }
    }
}

/// Labels with probability at or above the threshold. No parent closure is
/// applied, so hierarchy violations stay visible to the audit.
pub fn predict(probabilities: &[f64], cfg: &PredictConfig) -> Vec<LabelId> {
    probabilities.iter().enumerate().filter(|(_, &p)| p >= cfg.threshold).map(|(i, _)| i).collect()
}

/// Gradients of a scalar loss w.r.t. all parameters, given `dL/dz`.
pub fn backward(trace: &ForwardTrace, grad_logits: &[f64], params: &ModelParams) -> Result<ParamGrads, ModelError> {
    let mut grads = params.zeros_like();
    backward_into(trace, grad_logits, params, 1.0, &mut grads)?;
    Ok(grads)
}

/// Accumulates `scale * dL/dθ` into `grads`.
pub fn backward_into(
    trace: &ForwardTrace,
    grad_logits: &[f64],
    params: &ModelParams,
    scale: f64,
    grads: &mut ParamGrads,
) -> Result<(), ModelError> {
    let dims = params.dims();
    if grad_logits.len() != dims.num_labels || trace.logits.len() != dims.num_labels {
        return Err(ModelError::ShapeMismatch("grad_logits"));
    }
    if trace.hidden.len() != dims.hidden_dim || grads.dims() != dims {
        return Err(ModelError::ShapeMismatch("trace"));
    }

    let dropped: Vec<f64> = trace.hidden.iter().zip(&trace.dropout_mask).map(|(h, m)| h * m).collect();
    grads.head_weight.add_outer(scale, grad_logits, &dropped);
    axpy(&mut grads.head_bias, scale, grad_logits);
    if trace.precomputed {
        return Ok(());
    }

    let d_dropped = params.head_weight.matvec_t(grad_logits);
    let d_pre: Vec<f64> =
        d_dropped.iter().zip(&trace.dropout_mask).zip(&trace.hidden).map(|((g, m), h)| g * m * (1.0 - h * h)).collect();
    grads.enc_weight.add_outer(scale, &d_pre, &trace.mean_embedding);
    axpy(&mut grads.enc_bias, scale, &d_pre);

    let d_mean = params.enc_weight.matvec_t(&d_pre);
    let per_token = scale / trace.token_ids.len() as f64;
    for &t in &trace.token_ids {
        axpy(grads.embeddings.row_mut(t), per_token, &d_mean);
    }
    Ok(())
}
