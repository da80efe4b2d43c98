//! F1 scores and hierarchical consistency auditing.

use serde::{Deserialize, Serialize};

use crate::model::Matrix;
use crate::taxonomy::{LabelId, LabelSet, Taxonomy};

/// Per-label confusion counts over a dataset.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: Vec<u64>,
    pub fp: Vec<u64>,
    pub fn_: Vec<u64>,
}

impl ConfusionCounts {
    pub fn new(num_labels: usize) -> Self {
        Self { tp: vec![0; num_labels], fp: vec![0; num_labels], fn_: vec![0; num_labels] }
    }

    pub fn num_labels(&self) -> usize {
        self.tp.len()
    }

    /// Adds one document. `predicted` may be unsorted or contain duplicates.
    pub fn add(&mut self, predicted: &[LabelId], gold: &LabelSet) {
        let pred = LabelSet::new(predicted.iter().copied());
        for p in pred.iter() {
            if gold.contains(p) {
                self.tp[p] += 1;
            } else {
                self.fp[p] += 1;
            }
        }
        for g in gold.iter() {
            if !pred.contains(g) {
                self.fn_[g] += 1;
            }
        }
    }

    pub fn from_predictions(num_labels: usize, predicted: &[Vec<LabelId>], gold: &[LabelSet]) -> Self {
        assert_eq!(predicted.len(), gold.len(), "prediction/gold length");
        let mut counts = Self::new(num_labels);
        for (p, g) in predicted.iter().zip(gold) {
            counts.add(p, g);
        }
        counts
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        for (a, b) in self.tp.iter_mut().zip(&other.tp) {
            *a += b;
        }
        for (a, b) in self.fp.iter_mut().zip(&other.fp) {
            *a += b;
        }
        for (a, b) in self.fn_.iter_mut().zip(&other.fn_) {
            *a += b;
        }
    }

    pub fn support(&self, label: LabelId) -> u64 {
        self.tp[label] + self.fn_[label]
    }
}

/// `2tp / (2tp + fp + fn)`, with 0/0 taken as 0.
fn f1(tp: u64, fp: u64, fn_: u64) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

pub fn micro_f1(counts: &ConfusionCounts) -> f64 {
    let tp = counts.tp.iter().sum();
    let fp = counts.fp.iter().sum();
    let fn_ = counts.fn_.iter().sum();
    f1(tp, fp, fn_)
}

pub fn labelwise_f1(counts: &ConfusionCounts) -> Vec<f64> {
    (0..counts.num_labels()).map(|i| f1(counts.tp[i], counts.fp[i], counts.fn_[i])).collect()
}

pub fn macro_f1(counts: &ConfusionCounts) -> f64 {
    let per = labelwise_f1(counts);
    if per.is_empty() {
        0.0
    } else {
        per.iter().sum::<f64>() / per.len() as f64
    }
}

/// Violations of the parent/child agreement rule over a set of predictions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    /// Internal label predicted while none of its children is.
    pub parent_without_child: u64,
    /// Label predicted while its (non-root) parent is not.
    pub child_without_parent: u64,
    /// Documents times internal labels.
    pub audited: u64,
    pub violation_rate: f64,
}

pub fn consistency_audit(predictions: &[Vec<LabelId>], tax: &Taxonomy) -> ConsistencyReport {
    let internal: Vec<LabelId> = tax.internal_labels().collect();
    let mut report = ConsistencyReport::default();
    for pred in predictions {
        let set = LabelSet::new(pred.iter().copied());
        for &i in &internal {
            if set.contains(i) && !tax.children(i).iter().any(|&c| set.contains(c)) {
                report.parent_without_child += 1;
            }
        }
        for c in set.iter() {
            if let Some(p) = tax.parent(c) {
                if !set.contains(p) {
                    report.child_without_parent += 1;
                }
            }
        }
    }
    report.audited = (predictions.len() * internal.len()) as u64;
    if report.audited > 0 {
        report.violation_rate =
            (report.parent_without_child + report.child_without_parent) as f64 / report.audited as f64;
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeDistance {
    pub parent: LabelId,
    pub child: LabelId,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseDistances {
    pub edges: Vec<EdgeDistance>,
    pub mean: f64,
    pub min: f64,
}

/// Euclidean distance between each parent's and child's head rows.
pub fn classifier_pairwise_distance(head_weight: &Matrix, tax: &Taxonomy) -> PairwiseDistances {
    let edges: Vec<EdgeDistance> = tax
        .edges()
        .map(|(p, c)| {
            let d2: f64 = head_weight.row(p).iter().zip(head_weight.row(c)).map(|(a, b)| (a - b) * (a - b)).sum();
            EdgeDistance { parent: p, child: c, distance: d2.sqrt() }
        })
        .collect();
    let (mean, min) = if edges.is_empty() {
        (0.0, 0.0)
    } else {
        (
            edges.iter().map(|e| e.distance).sum::<f64>() / edges.len() as f64,
            edges.iter().map(|e| e.distance).fold(f64::INFINITY, f64::min),
        )
    };
    PairwiseDistances { edges, mean, min }
}
