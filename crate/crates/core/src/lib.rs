//! Hierarchical text classification with a light global model: a text
//! encoder and a multi-label head, trained with binary cross-entropy plus a
//! hierarchy-driven local contrastive objective.
//!
//! The hierarchy never enters the network. It is used only to pick, for
//! every positive label of a document, the confusable negatives (its
//! siblings and descendants) that the contrastive term pushes apart, and to
//! schedule which positives take part from the leaves upward.

pub mod checkpoint;
pub mod data;
pub mod losses;
pub mod mask;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod sampling;
pub mod taxonomy;
pub mod train;

pub use checkpoint::Checkpoint;
pub use data::{CorpusRecord, Document, SynthSpec, Vocabulary};
pub use losses::{BceMode, LclSpace, LossBreakdown, LossConfig};
pub use mask::LabelMask;
pub use metrics::{ConfusionCounts, ConsistencyReport};
pub use model::{ForwardTrace, Matrix, ModelDims, ModelParams, PredictConfig};
pub use optim::{AdamConfig, OptimizerState, PlateauRule};
pub use sampling::{NegativeIndex, NegativeMode, ReverseDepth, ScheduleConfig, ScheduleMode};
pub use taxonomy::{LabelId, LabelSet, Taxonomy};
pub use train::{EpochLog, EvalReport, TrainConfig, TrainOutcome};
