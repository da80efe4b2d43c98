//! Deterministic training loop and dataset evaluation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Document;
use crate::losses::{total_loss, LossConfig, LossError, Objective};
use crate::metrics::{consistency_audit, labelwise_f1, macro_f1, micro_f1, ConfusionCounts, ConsistencyReport};
use crate::model::{
    backward_into, encode, encode_precomputed, predict, Dropout, ForwardTrace, ModelDims, ModelError, ModelParams,
    PredictConfig,
};
use crate::optim::{adam_step, AdamConfig, OptimError, OptimizerState, PlateauConfig, PlateauRule, PlateauState};
use crate::sampling::{mix3, NegativeIndex, NegativeMode, SamplingError, ScheduleConfig};
use crate::taxonomy::{LabelId, Taxonomy};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("document {doc}: {source}")]
    Model { doc: String, source: ModelError },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr_encoder: f64,
    pub lr_head: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub plateau_rule: PlateauRule,
    pub seed: u64,
    pub batch_size: usize,
    pub dropout: f64,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub min_count: usize,
    pub max_vocab: Option<usize>,
    pub loss: LossConfig,
    pub schedule: ScheduleConfig,
    pub negatives: NegativeMode,
    pub predict: PredictConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr_encoder: 2e-5,
            lr_head: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            plateau_patience: 5,
            plateau_factor: 0.8,
            plateau_rule: PlateauRule::Neither,
            seed: 2023,
            batch_size: 16,
            dropout: 0.1,
            embed_dim: 64,
            hidden_dim: 64,
            min_count: 1,
            max_vocab: None,
            loss: LossConfig::default(),
            schedule: ScheduleConfig::default(),
            negatives: NegativeMode::LocalHard,
            predict: PredictConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Settings for the bundled synthetic corpus: the from-scratch encoder
    /// needs a far larger encoder learning rate than a pretrained one, and
    /// the corpus converges in a fraction of the epochs.
    pub fn synthetic_preset() -> Self {
        Self {
            epochs: 30,
            lr_encoder: 1e-3,
            lr_head: 1e-3,
            schedule: ScheduleConfig { k: 5, ..Default::default() },
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return bad("plateau_factor must lie in (0, 1)");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.plateau_patience == 0 {
            return bad("plateau_patience must be at least 1");
        }
        if !(self.lr_encoder > 0.0 && self.lr_head > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.batch_size == 0 || self.embed_dim == 0 || self.hidden_dim == 0 {
            return bad("batch_size, embed_dim and hidden_dim must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(self.loss.lambda >= 0.0 && self.loss.rec_reg_weight >= 0.0) {
            return bad("lambda and rec_reg_weight must be non-negative");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        self.schedule.validate()?;
        self.predict.validate().map_err(|e| TrainError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { beta1: self.adam_beta1, beta2: self.adam_beta2, eps: self.adam_eps }
    }

    pub fn plateau(&self) -> PlateauConfig {
        PlateauConfig { patience: self.plateau_patience, factor: self.plateau_factor, rule: self.plateau_rule }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub bce: f64,
    pub hilcl: f64,
    pub rec_reg: f64,
    pub total: f64,
    pub dev_micro_f1: f64,
    pub dev_macro_f1: f64,
    pub dev_violation_rate: f64,
    pub lr_encoder: f64,
    pub lr_head: f64,
    pub lr_decayed: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Snapshot with the best dev Macro-F1.
    pub best: ModelParams,
    pub best_epoch: usize,
    pub last: ModelParams,
    pub log: Vec<EpochLog>,
}

/// Forward pass for a document, via its feature vector when present.
pub fn forward(
    params: &ModelParams,
    doc: &Document,
    dropout: Option<Dropout<'_, ChaCha8Rng>>,
) -> Result<ForwardTrace, TrainError> {
    let out = match &doc.feature {
        Some(f) => encode_precomputed(params, f, dropout),
        None => encode(params, &doc.token_ids, dropout),
    };
    out.map_err(|source| TrainError::Model { doc: doc.id.clone(), source })
}

pub fn predict_documents(
    params: &ModelParams,
    docs: &[Document],
    cfg: &PredictConfig,
) -> Result<Vec<Vec<LabelId>>, TrainError> {
    docs.iter().map(|d| forward(params, d, None).map(|t| predict(&t.probabilities, cfg))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub labelwise_f1: Vec<f64>,
    pub counts: ConfusionCounts,
    pub consistency: ConsistencyReport,
}

pub fn evaluate(
    params: &ModelParams,
    docs: &[Document],
    tax: &Taxonomy,
    cfg: &PredictConfig,
) -> Result<EvalReport, TrainError> {
    let preds = predict_documents(params, docs, cfg)?;
    let mut counts = ConfusionCounts::new(tax.num_labels());
    for (p, d) in preds.iter().zip(docs) {
        counts.add(p, &d.labels);
    }
    Ok(EvalReport {
        micro_f1: micro_f1(&counts),
        macro_f1: macro_f1(&counts),
        labelwise_f1: labelwise_f1(&counts),
        consistency: consistency_audit(&preds, tax),
        counts,
    })
}

/// Model dimensions implied by the config, taxonomy and vocabulary size.
pub fn model_dims(cfg: &TrainConfig, tax: &Taxonomy, vocab_size: usize) -> ModelDims {
    ModelDims { vocab_size, embed_dim: cfg.embed_dim, hidden_dim: cfg.hidden_dim, num_labels: tax.num_labels() }
}

pub fn train(
    train_docs: &[Document],
    dev_docs: &[Document],
    tax: &Taxonomy,
    vocab_size: usize,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    train_with(train_docs, dev_docs, tax, vocab_size, cfg, |_| {})
}

/// Trains and calls `on_epoch` after each epoch's log entry is complete.
pub fn train_with(
    train_docs: &[Document],
    dev_docs: &[Document],
    tax: &Taxonomy,
    vocab_size: usize,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train_docs.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let index = NegativeIndex::build(tax, cfg.negatives)?;
    let obj = Objective { cfg: &cfg.loss, sched: &cfg.schedule, index: &index, tax };
    let adam = cfg.adam();
    let plateau_cfg = cfg.plateau();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::init(model_dims(cfg, tax, vocab_size), &mut rng);
    let mut grads = params.zeros_like();
    let mut opt = OptimizerState::new(&params, cfg.lr_encoder, cfg.lr_head);
    let mut plateau = PlateauState::default();

    let mut order: Vec<usize> = (0..train_docs.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best = params.clone();
    let mut best_epoch = 0;
    let mut best_macro = f64::NEG_INFINITY;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut bce, mut hilcl, mut rec_reg, mut total) = (0.0, 0.0, 0.0, 0.0);

        for batch in order.chunks(cfg.batch_size) {
            grads.fill_zero();
            let scale = 1.0 / batch.len() as f64;
            for &d in batch {
                let doc = &train_docs[d];
                let trace = forward(&params, doc, Some(Dropout { rate: cfg.dropout, rng: &mut rng }))?;
                let key = mix3(epoch as u64, d as u64, 0);
                let out = total_loss(&trace.logits, &doc.labels, epoch, &obj, &params.head_weight, key)?;
                backward_into(&trace, &out.grad_logits, &params, scale, &mut grads)
                    .map_err(|source| TrainError::Model { doc: doc.id.clone(), source })?;
                if let Some(g) = &out.grad_head_weight {
                    for (a, b) in grads.head_weight.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *a += scale * b;
                    }
                }
                bce += out.bce;
                hilcl += out.hilcl;
                rec_reg += out.rec_reg;
                total += out.total;
            }
            adam_step(&mut params, &grads, &mut opt, &adam)?;
        }

        let dev = evaluate(&params, dev_docs, tax, &cfg.predict)?;
        let decay = plateau.observe(dev.micro_f1, dev.macro_f1, &plateau_cfg);
        if let Some(f) = decay {
            opt.scale_lrs(f);
        }
        if dev.macro_f1 > best_macro {
            best_macro = dev.macro_f1;
            best = params.clone();
            best_epoch = epoch;
        }
        let n = train_docs.len() as f64;
        let entry = EpochLog {
            epoch,
            bce: bce / n,
            hilcl: hilcl / n,
            rec_reg: rec_reg / n,
            total: total / n,
            dev_micro_f1: dev.micro_f1,
            dev_macro_f1: dev.macro_f1,
            dev_violation_rate: dev.consistency.violation_rate,
            lr_encoder: opt.lr_encoder,
            lr_head: opt.lr_head,
            lr_decayed: decay.is_some(),
        };
        on_epoch(&entry);
        log.push(entry);
    }

    Ok(TrainOutcome { best, best_epoch, last: params, log })
}
