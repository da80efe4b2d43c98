//! Shared fixtures for the criterion benchmarks.

use hilight_core::data::{generate_synthetic, resolve_records};
use hilight_core::{Document, SynthSpec, Taxonomy, TrainConfig, Vocabulary};

pub struct Fixture {
    pub taxonomy: Taxonomy,
    pub vocab: Vocabulary,
    pub train: Vec<Document>,
    pub dev: Vec<Document>,
    pub config: TrainConfig,
}

/// A synthetic corpus over a tree with the given branching factors.
pub fn fixture(branching: &[usize], train_docs: usize) -> Fixture {
    let spec = SynthSpec {
        branching: branching.to_vec(),
        train_docs,
        dev_docs: train_docs / 4,
        test_docs: 1,
        ..SynthSpec::default()
    };
    let corpus = generate_synthetic(&spec).expect("valid synthetic spec");
    let config = TrainConfig { epochs: 1, ..TrainConfig::synthetic_preset() };
    let vocab = Vocabulary::from_records(&corpus.train, config.min_count, config.max_vocab);
    let train = resolve_records(&corpus.train, &corpus.taxonomy, &vocab).expect("train resolves");
    let dev = resolve_records(&corpus.dev, &corpus.taxonomy, &vocab).expect("dev resolves");
    Fixture { taxonomy: corpus.taxonomy, vocab, train, dev, config }
}
