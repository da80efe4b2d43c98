//! Local hard-negative selection and the fine-to-coarse target curriculum.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::LabelMask;
use crate::taxonomy::{LabelId, LabelSet, Taxonomy};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SamplingError {
    #[error("label {0} is not among the document's positives")]
    NotAPositive(LabelId),
    #[error("schedule parameter k must be at least 1")]
    InvalidK,
    #[error("random negative sample size must be at least 1")]
    InvalidSampleSize,
}

/// Which labels count as negatives for a positive label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum NegativeMode {
    /// Siblings and descendants.
    #[default]
    LocalHard,
    /// Uniform sample from all non-positive labels. `k = None` matches the
    /// mean local-hard candidate count of the taxonomy.
    RandomK {
        #[serde(default)]
        k: Option<usize>,
        #[serde(default = "default_seed")]
        seed: u64,
    },
    SiblingsOnly,
    SubtreeOnly,
}

fn default_seed() -> u64 {
    2023
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    #[default]
    FineToCoarse,
    CoarseToFine,
    AllAtOnce,
}

/// Reverse-depth measure used by the curriculum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReverseDepth {
    /// Longest distance to a leaf in the label's subtree.
    #[default]
    Height,
    /// Shortest distance to a leaf in the label's subtree.
    MinLeafDist,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    /// Epochs spent on each level before the next is added.
    pub k: usize,
    pub mode: ScheduleMode,
    pub drev: ReverseDepth,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { k: 2, mode: ScheduleMode::FineToCoarse, drev: ReverseDepth::Height }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<(), SamplingError> {
        if self.k == 0 {
            Err(SamplingError::InvalidK)
        } else {
            Ok(())
        }
    }
}

fn reverse_depth(tax: &Taxonomy, id: LabelId, drev: ReverseDepth) -> usize {
    match drev {
        ReverseDepth::Height => tax.height(id),
        ReverseDepth::MinLeafDist => tax.min_leaf_distance(id),
    }
}

/// Positives that take part in the contrastive term at `epoch` (0-based).
///
/// Fine-to-coarse admits labels whose reverse depth is at most
/// `epoch / k`; coarse-to-fine mirrors that ordering from the top level.
pub fn hilearn_targets(tax: &Taxonomy, positives: &LabelSet, epoch: usize, cfg: &ScheduleConfig) -> LabelSet {
    let level = epoch / cfg.k.max(1);
    match cfg.mode {
        ScheduleMode::AllAtOnce => positives.clone(),
        ScheduleMode::FineToCoarse => {
            LabelSet::new(positives.iter().filter(|&y| reverse_depth(tax, y, cfg.drev) <= level))
        }
        ScheduleMode::CoarseToFine => {
            let top = (0..tax.num_labels()).map(|i| reverse_depth(tax, i, cfg.drev)).max().unwrap_or(0);
            LabelSet::new(positives.iter().filter(|&y| top - reverse_depth(tax, y, cfg.drev) <= level))
        }
    }
}

/// Per-label negative candidates, independent of any document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegativeIndex {
    mode: NegativeMode,
    candidates: Vec<LabelMask>,
    sample_size: usize,
    seed: u64,
}

impl NegativeIndex {
    pub fn build(tax: &Taxonomy, mode: NegativeMode) -> Result<Self, SamplingError> {
        let c = tax.num_labels();
        let sibling = |i| tax.sibling_mask(i).expect("id in range");
        let subtree = |i| tax.subtree_mask(i).expect("id in range");
        let local_hard = |i| {
            let mut m = sibling(i);
            m.union_with(&subtree(i));
            m
        };
        let (candidates, sample_size, seed) = match mode {
            NegativeMode::LocalHard => ((0..c).map(local_hard).collect(), 0, 0),
            NegativeMode::SiblingsOnly => ((0..c).map(sibling).collect(), 0, 0),
            NegativeMode::SubtreeOnly => ((0..c).map(subtree).collect(), 0, 0),
            NegativeMode::RandomK { k, seed } => {
                let size = match k {
                    Some(0) => return Err(SamplingError::InvalidSampleSize),
                    Some(k) => k,
                    None => mean_local_hard_size(tax),
                };
                let all = (0..c)
                    .map(|i| {
                        let mut m = LabelMask::from_ids(c, 0..c);
                        m.remove(i);
                        m
                    })
                    .collect();
                (all, size, seed)
            }
        };
        Ok(Self { mode, candidates, sample_size, seed })
    }

    pub fn mode(&self) -> NegativeMode {
        self.mode
    }

    pub fn num_labels(&self) -> usize {
        self.candidates.len()
    }

    pub fn candidates(&self, i: LabelId) -> &LabelMask {
        &self.candidates[i]
    }

    /// Resolved random sample size (0 for the structural modes).
    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    /// Negatives for positive `label` of a document: the candidates minus
    /// every positive. In random mode a uniform draw of `sample_size`
    /// non-positive labels, seeded by the index seed, `key` and `label`.
    pub fn hard_negatives(&self, label: LabelId, positives: &LabelSet, key: u64) -> Result<LabelMask, SamplingError> {
        if !positives.contains(label) {
            return Err(SamplingError::NotAPositive(label));
        }
        let c = self.num_labels();
        match self.mode {
            NegativeMode::RandomK { .. } => {
                let pool: Vec<LabelId> = (0..c).filter(|&j| !positives.contains(j)).collect();
                let take = self.sample_size.min(pool.len());
                let mut rng = ChaCha8Rng::seed_from_u64(mix3(self.seed, key, label as u64));
                let picked = rand::seq::index::sample(&mut rng, pool.len(), take);
                Ok(LabelMask::from_ids(c, picked.into_iter().map(|p| pool[p])))
            }
            _ => {
                let mut out = self.candidates[label].clone();
                for p in positives.iter() {
                    out.remove(p);
                }
                Ok(out)
            }
        }
    }
}

/// Mean local-hard candidate count, rounded up (at least 1).
pub fn mean_local_hard_size(tax: &Taxonomy) -> usize {
    let c = tax.num_labels();
    let total: usize = (0..c).map(|i| tax.sibling_set(i).unwrap().len() + tax.subtree_set(i).unwrap().len()).sum();
    total.div_ceil(c).max(1)
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub(crate) fn mix3(a: u64, b: u64, c: u64) -> u64 {
    splitmix(splitmix(splitmix(a) ^ b) ^ c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Taxonomy {
        Taxonomy::parse(["Root\tA\tB", "A\ta1\ta2", "B\tb1"]).unwrap()
    }

    fn set(t: &Taxonomy, names: &[&str]) -> LabelSet {
        LabelSet::new(names.iter().map(|n| t.id(n).unwrap()))
    }

    fn names(t: &Taxonomy, m: &LabelMask) -> Vec<String> {
        m.iter().map(|i| t.name(i).to_string()).collect()
    }

    #[test]
    fn local_hard_candidates() {
        let t = small();
        let idx = NegativeIndex::build(&t, NegativeMode::LocalHard).unwrap();
        assert_eq!(names(&t, idx.candidates(t.id("A").unwrap())), ["B", "a1", "a2"]);
        assert_eq!(names(&t, idx.candidates(t.id("a1").unwrap())), ["a2"]);
        assert!(!idx.candidates(t.id("A").unwrap()).contains(t.id("b1").unwrap()));
    }

    #[test]
    fn ablation_masks() {
        let t = small();
        let a = t.id("A").unwrap();
        let sib = NegativeIndex::build(&t, NegativeMode::SiblingsOnly).unwrap();
        let sub = NegativeIndex::build(&t, NegativeMode::SubtreeOnly).unwrap();
        assert_eq!(names(&t, sib.candidates(a)), ["B"]);
        assert_eq!(names(&t, sub.candidates(a)), ["a1", "a2"]);
    }

    #[test]
    fn hard_negatives_subtract_positives() {
        let t = small();
        let idx = NegativeIndex::build(&t, NegativeMode::LocalHard).unwrap();
        let (a, a1) = (t.id("A").unwrap(), t.id("a1").unwrap());

        let pos = set(&t, &["A", "a1"]);
        assert_eq!(names(&t, &idx.hard_negatives(a, &pos, 0).unwrap()), ["B", "a2"]);
        assert_eq!(names(&t, &idx.hard_negatives(a1, &pos, 0).unwrap()), ["a2"]);

        let pos = set(&t, &["A", "a1", "a2"]);
        assert!(idx.hard_negatives(a1, &pos, 0).unwrap().is_empty());

        let pos = set(&t, &["A", "B", "a1", "b1"]);
        assert_eq!(names(&t, &idx.hard_negatives(a, &pos, 0).unwrap()), ["a2"]);

        assert_eq!(
            idx.hard_negatives(t.id("B").unwrap(), &set(&t, &["A"]), 0),
            Err(SamplingError::NotAPositive(t.id("B").unwrap()))
        );
    }

    #[test]
    fn random_negatives_are_seeded() {
        let t = small();
        // mean candidate size: A:3, B:2, a1:1, a2:1, b1:0 -> 7/5 -> 2
        assert_eq!(mean_local_hard_size(&t), 2);
        let idx = NegativeIndex::build(&t, NegativeMode::RandomK { k: None, seed: 7 }).unwrap();
        assert_eq!(idx.sample_size(), 2);
        let pos = set(&t, &["A", "a1"]);
        let a = t.id("A").unwrap();
        let first = idx.hard_negatives(a, &pos, 11).unwrap();
        assert_eq!(first.count(), 2);
        assert!(first.is_disjoint(&pos.to_mask(5)));
        assert_eq!(first, idx.hard_negatives(a, &pos, 11).unwrap());
        assert!(NegativeIndex::build(&t, NegativeMode::RandomK { k: Some(0), seed: 1 }).is_err());
    }

    #[test]
    fn curriculum_levels() {
        // depth-3 balanced chain of binary splits
        let t = Taxonomy::parse(["Root\tA", "A\tB\tC", "B\tb1\tb2", "C\tc1"]).unwrap();
        let pos = set(&t, &["A", "B", "b1"]);
        let cfg = ScheduleConfig { k: 2, ..Default::default() };
        let at =
            |ep| -> Vec<String> { hilearn_targets(&t, &pos, ep, &cfg).iter().map(|i| t.name(i).to_string()).collect() };
        assert_eq!(at(0), ["b1"]);
        assert_eq!(at(1), ["b1"]);
        assert_eq!(at(2), ["B", "b1"]);
        assert_eq!(at(4), ["A", "B", "b1"]);
        assert_eq!(at(100), ["A", "B", "b1"]);

        let rev = ScheduleConfig { k: 2, mode: ScheduleMode::CoarseToFine, ..Default::default() };
        let first: Vec<_> = hilearn_targets(&t, &pos, 0, &rev).iter().map(|i| t.name(i)).collect();
        assert_eq!(first, ["A"]);
        let all = ScheduleConfig { mode: ScheduleMode::AllAtOnce, ..Default::default() };
        assert_eq!(hilearn_targets(&t, &pos, 0, &all), pos);
    }

    #[test]
    fn min_leaf_reverse_depth() {
        let t = Taxonomy::parse(["Root\tA", "A\tx\tB", "B\ty"]).unwrap();
        let pos = set(&t, &["A", "B", "y"]);
        let cfg = ScheduleConfig { k: 1, drev: ReverseDepth::MinLeafDist, ..Default::default() };
        let got: Vec<_> = hilearn_targets(&t, &pos, 1, &cfg).iter().map(|i| t.name(i)).collect();
        assert_eq!(got, ["A", "B", "y"]);
        let cfg = ScheduleConfig { k: 1, ..Default::default() };
        let got: Vec<_> = hilearn_targets(&t, &pos, 1, &cfg).iter().map(|i| t.name(i)).collect();
        assert_eq!(got, ["B", "y"]);
    }

    #[test]
    fn schedule_k_validated() {
        assert_eq!(ScheduleConfig { k: 0, ..Default::default() }.validate(), Err(SamplingError::InvalidK));
    }
}
