//! Versioned JSON checkpoints and label-space CSV export.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Document, Vocabulary};
use crate::model::{ModelDims, ModelParams};
use crate::taxonomy::Taxonomy;
use crate::train::{forward, TrainError};

pub const FORMAT: &str = "hilight-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("cannot access {path}")]
    Io { path: String, source: std::io::Error },
    #[error("checkpoint is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported checkpoint format `{format}` version {version}")]
    Version { format: String, version: u32 },
    #[error("checkpoint incompatible: {0}")]
    Incompatible(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub dims: ModelDims,
    pub vocab_hash: String,
    pub labels: Vec<String>,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn new(params: ModelParams, vocab: &Vocabulary, tax: &Taxonomy) -> Self {
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            dims: params.dims(),
            vocab_hash: vocab.hash(),
            labels: tax.names().to_vec(),
            params,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CheckpointError> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format != FORMAT || ck.version != VERSION {
            return Err(CheckpointError::Version { format: ck.format, version: ck.version });
        }
        ck.params.check_shapes().map_err(|e| CheckpointError::Incompatible(e.to_string()))?;
        if ck.params.dims() != ck.dims {
            return Err(CheckpointError::Incompatible("recorded dims disagree with tensors".into()));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_json())
            .map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    /// Fails unless the vocabulary and taxonomy match what the model was
    /// trained with.
    pub fn verify(&self, vocab: &Vocabulary, tax: &Taxonomy) -> Result<(), CheckpointError> {
        if vocab.hash() != self.vocab_hash || vocab.len() != self.dims.vocab_size {
            return Err(CheckpointError::Incompatible("vocabulary hash or size differs".into()));
        }
        if tax.names() != self.labels.as_slice() {
            return Err(CheckpointError::Incompatible("taxonomy labels differ".into()));
        }
        Ok(())
    }
}

fn csv_row(out: &mut String, key: &str, values: &[f64]) {
    out.push_str(&csv_field(key));
    for v in values {
        let _ = write!(out, ",{v}");
    }
    out.push('\n');
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per label: name followed by its head weight row.
pub fn label_space_csv(params: &ModelParams, tax: &Taxonomy) -> String {
    let mut out = String::new();
    for i in 0..tax.num_labels() {
        csv_row(&mut out, tax.name(i), params.head_weight.row(i));
    }
    out
}

/// One row per document: id followed by its evaluation-mode hidden vector.
pub fn document_space_csv(params: &ModelParams, docs: &[Document]) -> Result<String, TrainError> {
    let mut out = String::new();
    for d in docs {
        let trace = forward(params, d, None)?;
        csv_row(&mut out, &d.id, &trace.hidden);
    }
    Ok(out)
}
