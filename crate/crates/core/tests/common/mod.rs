//! Brute-force reference implementations and fixtures shared by the
//! integration tests and the acceptance suite. Nothing here calls the
//! structural queries under test; everything is recomputed from a plain
//! parent array.

#![allow(dead_code)]

use std::collections::BTreeSet;

use hilight_core::{LabelId, LabelSet, Taxonomy};
use rand::seq::SliceRandom;
use rand::Rng;

/// A generated tree: the parsed taxonomy plus the generator's own parent
/// array, re-keyed to the taxonomy's label ids.
pub struct Tree {
    pub tax: Taxonomy,
    pub parent: Vec<Option<LabelId>>,
    pub lines: Vec<String>,
}

/// Random tree with `1..=max_labels` labels and depth at most `max_depth`.
/// Label names are shuffled so id order differs from generation order.
pub fn random_tree<R: Rng>(rng: &mut R, max_labels: usize, max_depth: usize) -> Tree {
    let n = rng.random_range(1..=max_labels);
    let mut gen_parent: Vec<Option<usize>> = Vec::with_capacity(n);
    let mut depth: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        let eligible: Vec<usize> = (0..i).filter(|&j| depth[j] < max_depth).collect();
        // bias towards the root so trees are not all long chains
        let p = if eligible.is_empty() || rng.random_bool(0.15) {
            None
        } else {
            Some(eligible[rng.random_range(0..eligible.len())])
        };
        depth.push(p.map_or(1, |q| depth[q] + 1));
        gen_parent.push(p);
    }
    let mut names: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
    names.shuffle(rng);

    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut top = Vec::new();
    for (i, p) in gen_parent.iter().enumerate() {
        match p {
            Some(q) => children[*q].push(i),
            None => top.push(i),
        }
    }
    let join = |parent: &str, kids: &[usize]| {
        let mut s = parent.to_string();
        for &k in kids {
            s.push('\t');
            s.push_str(&names[k]);
        }
        s
    };
    let mut lines = vec![join("Root", &top)];
    let mut bodies: Vec<String> =
        (0..n).filter(|&i| !children[i].is_empty()).map(|i| join(&names[i], &children[i])).collect();
    bodies.shuffle(rng);
    lines.extend(bodies);

    let tax = Taxonomy::parse(lines.iter().map(String::as_str)).expect("generated tree parses");
    let mut parent = vec![None; n];
    for i in 0..n {
        let id = tax.id(&names[i]).expect("every generated label is present");
        parent[id] = gen_parent[i].map(|q| tax.id(&names[q]).unwrap());
    }
    Tree { tax, parent, lines }
}

pub fn proper_ancestors(parent: &[Option<LabelId>], mut i: LabelId) -> Vec<LabelId> {
    let mut out = Vec::new();
    while let Some(p) = parent[i] {
        out.push(p);
        i = p;
    }
    out
}

pub fn depth(parent: &[Option<LabelId>], i: LabelId) -> usize {
    proper_ancestors(parent, i).len() + 1
}

pub fn siblings(parent: &[Option<LabelId>], i: LabelId) -> BTreeSet<LabelId> {
    (0..parent.len()).filter(|&j| j != i && parent[j] == parent[i]).collect()
}

pub fn subtree(parent: &[Option<LabelId>], i: LabelId) -> BTreeSet<LabelId> {
    (0..parent.len()).filter(|&j| proper_ancestors(parent, j).contains(&i)).collect()
}

pub fn is_leaf(parent: &[Option<LabelId>], i: LabelId) -> bool {
    !parent.contains(&Some(i))
}

/// Longest downward path to a leaf.
pub fn height(parent: &[Option<LabelId>], i: LabelId) -> usize {
    let d = depth(parent, i);
    subtree(parent, i).into_iter().map(|j| depth(parent, j) - d).max().unwrap_or(0)
}

/// Shortest downward path to a leaf.
pub fn min_leaf_distance(parent: &[Option<LabelId>], i: LabelId) -> usize {
    let d = depth(parent, i);
    std::iter::once(i)
        .chain(subtree(parent, i))
        .filter(|&j| is_leaf(parent, j))
        .map(|j| depth(parent, j) - d)
        .min()
        .unwrap()
}

pub fn local_hard(parent: &[Option<LabelId>], i: LabelId, positives: &BTreeSet<LabelId>) -> BTreeSet<LabelId> {
    siblings(parent, i).union(&subtree(parent, i)).filter(|j| !positives.contains(j)).copied().collect()
}

/// Random ancestor-closed, non-empty label set.
pub fn random_positives<R: Rng>(rng: &mut R, parent: &[Option<LabelId>]) -> BTreeSet<LabelId> {
    let n = parent.len();
    let picks = rng.random_range(1..=n.min(3));
    let mut out = BTreeSet::new();
    for _ in 0..picks {
        let i = rng.random_range(0..n);
        out.insert(i);
        out.extend(proper_ancestors(parent, i));
    }
    out
}

pub fn to_labelset(s: &BTreeSet<LabelId>) -> LabelSet {
    LabelSet::new(s.iter().copied())
}

/// Reference consistency counts: (parent_without_child, child_without_parent, audited).
pub fn consistency(parent: &[Option<LabelId>], preds: &[Vec<LabelId>]) -> (u64, u64, u64) {
    let n = parent.len();
    let internal: Vec<LabelId> = (0..n).filter(|&i| !is_leaf(parent, i)).collect();
    let (mut pwc, mut cwp) = (0, 0);
    for p in preds {
        let set: BTreeSet<LabelId> = p.iter().copied().collect();
        for &i in &internal {
            let has_child = (0..n).any(|c| parent[c] == Some(i) && set.contains(&c));
            if set.contains(&i) && !has_child {
                pwc += 1;
            }
        }
        for &c in &set {
            if let Some(q) = parent[c] {
                if !set.contains(&q) {
                    cwp += 1;
                }
            }
        }
    }
    (pwc, cwp, (preds.len() * internal.len()) as u64)
}

pub const FD_STEP: f64 = 1e-4;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs() + 1e-12)
}

/// Central difference of `f` along coordinate `i` of `x`.
pub fn central_diff(x: &mut [f64], i: usize, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[i];
    x[i] = orig + FD_STEP;
    let up = f(x);
    x[i] = orig - FD_STEP;
    let down = f(x);
    x[i] = orig;
    (up - down) / (2.0 * FD_STEP)
}

/// Below this magnitude a step-`FD_STEP` difference of an O(1) loss is
/// dominated by double-precision roundoff (about 1e-12 absolute).
pub const ROUNDOFF_FLOOR: f64 = 1e-6;

/// Worst-coordinate comparison of an analytic gradient with central differences.
#[derive(Debug, Clone, Copy, Default)]
pub struct GradError {
    /// Max over coordinates of `rel_err`.
    pub strict: f64,
    /// Same, with the denominator floored at `ROUNDOFF_FLOOR`.
    pub floored: f64,
    /// Analytic and numeric values at the coordinate with the worst `strict` error.
    pub worst: (f64, f64),
}

pub fn grad_errors(x: &[f64], grad: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> GradError {
    assert_eq!(x.len(), grad.len());
    let mut x = x.to_vec();
    let mut out = GradError::default();
    for (i, &a) in grad.iter().enumerate() {
        let n = central_diff(&mut x, i, &mut f);
        let e = rel_err(a, n);
        if e > out.strict {
            out.strict = e;
            out.worst = (a, n);
        }
        out.floored = out.floored.max((a - n).abs() / (a.abs() + n.abs()).max(ROUNDOFF_FLOOR));
    }
    out
}

pub mod gradcheck;
