mod common;

use std::collections::BTreeSet;

use common::*;
use hilight_core::sampling::mean_local_hard_size;
use hilight_core::taxonomy::TaxonomyError;
use hilight_core::{NegativeIndex, NegativeMode, Taxonomy};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tree(seed: u64, max_labels: usize) -> Tree {
    random_tree(&mut ChaCha8Rng::seed_from_u64(seed), max_labels, 6)
}

fn set(v: Vec<usize>) -> BTreeSet<usize> {
    v.into_iter().collect()
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 200,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn structural_queries_match_oracle(seed in any::<u64>()) {
        let Tree { tax, parent, .. } = tree(seed, 120);
        for i in 0..tax.num_labels() {
            prop_assert_eq!(tax.parent(i), parent[i]);
            prop_assert_eq!(tax.depth(i), depth(&parent, i));
            prop_assert_eq!(tax.height(i), height(&parent, i));
            prop_assert_eq!(tax.min_leaf_distance(i), min_leaf_distance(&parent, i));
            prop_assert_eq!(tax.is_leaf(i), is_leaf(&parent, i));
            prop_assert_eq!(set(tax.sibling_set(i).unwrap()), siblings(&parent, i));
            prop_assert_eq!(set(tax.subtree_set(i).unwrap()), subtree(&parent, i));
            prop_assert_eq!(set(tax.sibling_mask(i).unwrap().to_vec()), siblings(&parent, i));
            prop_assert_eq!(set(tax.subtree_mask(i).unwrap().to_vec()), subtree(&parent, i));
            let mut anc = proper_ancestors(&parent, i);
            anc.push(i);
            prop_assert_eq!(set(tax.ancestors_inclusive(i)), set(anc));
        }
    }

    #[test]
    fn sibling_relation_is_symmetric_and_disjoint_from_subtree(seed in any::<u64>()) {
        let tax = tree(seed, 80).tax;
        let mut subtree_total = 0;
        for i in 0..tax.num_labels() {
            let sib = tax.sibling_mask(i).unwrap();
            let sub = tax.subtree_mask(i).unwrap();
            prop_assert!(!sib.contains(i) && !sub.contains(i));
            prop_assert!(sib.is_disjoint(&sub));
            for j in sib.iter() {
                prop_assert!(tax.sibling_mask(j).unwrap().contains(i));
            }
            subtree_total += sub.count();
        }
        // each label lies in the subtree of each of its proper ancestors
        let depth_total: usize = (0..tax.num_labels()).map(|i| tax.depth(i) - 1).sum();
        prop_assert_eq!(subtree_total, depth_total);
    }

    #[test]
    fn negative_index_matches_oracle(seed in any::<u64>()) {
        let Tree { tax, parent, .. } = tree(seed, 120);
        let local = NegativeIndex::build(&tax, NegativeMode::LocalHard).unwrap();
        let sibs = NegativeIndex::build(&tax, NegativeMode::SiblingsOnly).unwrap();
        let subs = NegativeIndex::build(&tax, NegativeMode::SubtreeOnly).unwrap();
        for i in 0..tax.num_labels() {
            let expected: BTreeSet<_> = siblings(&parent, i).union(&subtree(&parent, i)).copied().collect();
            prop_assert_eq!(set(local.candidates(i).to_vec()), expected);
            prop_assert_eq!(set(sibs.candidates(i).to_vec()), siblings(&parent, i));
            prop_assert_eq!(set(subs.candidates(i).to_vec()), subtree(&parent, i));
        }
    }

    #[test]
    fn hard_negatives_match_oracle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let Tree { tax, parent, .. } = tree(seed, 120);
        let index = NegativeIndex::build(&tax, NegativeMode::LocalHard).unwrap();
        for _ in 0..5 {
            let pos = random_positives(&mut rng, &parent);
            let ls = to_labelset(&pos);
            for &y in &pos {
                let hard = index.hard_negatives(y, &ls, 0).unwrap();
                prop_assert_eq!(set(hard.to_vec()), local_hard(&parent, y, &pos));
                prop_assert!(pos.iter().all(|&p| !hard.contains(p)));
            }
        }
    }

    #[test]
    fn random_negatives_avoid_positives_and_are_keyed(seed in any::<u64>(), k in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let Tree { tax, parent, .. } = tree(seed, 60);
        let index = NegativeIndex::build(&tax, NegativeMode::RandomK { k: Some(k), seed: 7 }).unwrap();
        let pos = random_positives(&mut rng, &parent);
        let ls = to_labelset(&pos);
        let pool = tax.num_labels() - pos.len();
        for &y in &pos {
            let a = index.hard_negatives(y, &ls, 11).unwrap();
            prop_assert_eq!(a.count(), k.min(pool));
            prop_assert!(pos.iter().all(|&p| !a.contains(p)));
            prop_assert_eq!(&a, &index.hard_negatives(y, &ls, 11).unwrap());
        }
    }

    #[test]
    fn text_and_dump_round_trips(seed in any::<u64>()) {
        let Tree { tax, .. } = tree(seed, 80);
        // text keeps the structure; ids follow first appearance in the text
        let again = Taxonomy::parse(tax.to_lines()).unwrap();
        prop_assert_eq!(again.num_labels(), tax.num_labels());
        for i in 0..tax.num_labels() {
            let j = again.id(tax.name(i)).unwrap();
            prop_assert_eq!(again.parent(j).map(|p| again.name(p)), tax.parent(i).map(|p| tax.name(p)));
        }
        let json = serde_json::to_string(&tax.to_dump()).unwrap();
        let back = Taxonomy::from_dump(&serde_json::from_str(&json).unwrap()).unwrap();
        prop_assert_eq!(back.names(), tax.names());
        for i in 0..tax.num_labels() {
            prop_assert_eq!(back.parent(i), tax.parent(i));
        }
    }

    #[test]
    fn labelset_validation_requires_parents(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let Tree { tax, parent, .. } = tree(seed, 60);
        let pos = random_positives(&mut rng, &parent);
        let ids: Vec<_> = pos.iter().copied().collect();
        prop_assert!(tax.validate_labelset(&ids).is_ok());
        prop_assert_eq!(set(tax.close_upwards(&ids).iter().collect()), pos.clone());
        if let Some(&deep) = ids.iter().find(|&&i| parent[i].is_some()) {
            let p = parent[deep].unwrap();
            let broken: Vec<_> = ids.iter().copied().filter(|&i| i != p).collect();
            let is_orphan = matches!(
                tax.validate_labelset(&broken),
                Err(TaxonomyError::OrphanLabel { .. })
            );
            prop_assert!(is_orphan);
        }
    }
}

#[test]
fn mean_local_hard_size_matches_oracle() {
    for seed in 0..50 {
        let Tree { tax, parent, .. } = tree(seed, 60);
        let n = tax.num_labels();
        let total: usize = (0..n).map(|i| siblings(&parent, i).len() + subtree(&parent, i).len()).sum();
        let expected = (total.div_ceil(n)).max(1);
        assert_eq!(mean_local_hard_size(&tax), expected, "seed {seed}");
    }
}

#[test]
fn malformed_taxonomies_are_rejected() {
    assert!(matches!(Taxonomy::parse(["Root\tA\tB", "A\tB"]), Err(TaxonomyError::MultipleParents { line: 2, .. })));
    assert!(matches!(Taxonomy::parse(["Root\tA", "X\tY"]), Err(TaxonomyError::DisconnectedNode { .. })));
    assert!(matches!(Taxonomy::parse(["Root\tA", "A\tB", "B\tRoot"]), Err(TaxonomyError::CycleDetected { .. })));
    assert!(matches!(Taxonomy::parse(Vec::<&str>::new()), Err(TaxonomyError::EmptyTaxonomy)));
}
