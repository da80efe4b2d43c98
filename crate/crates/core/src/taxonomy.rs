//! Label hierarchy: parsing, validation and structural queries.
//!
//! The taxonomy file has one line per parent: the parent name followed by its
//! children, all TAB-separated. The first parent
//! mentioned is the root. The root is not a classifiable label; ids
//! `0..num_labels()` cover every other node in first-appearance order.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::LabelMask;

/// Index of a non-root label.
pub type LabelId = usize;

const DUMP_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TaxonomyError {
    #[error("taxonomy is empty")]
    EmptyTaxonomy,
    #[error("label `{label}` has more than one parent (line {line})")]
    MultipleParents { label: String, line: usize },
    #[error("label `{label}` is not reachable from the root")]
    DisconnectedNode { label: String },
    #[error("cycle detected through label `{label}`")]
    CycleDetected { label: String },
    #[error("label `{label}` is present but its parent `{parent}` is not")]
    OrphanLabel { label: String, parent: String },
    #[error("label id {0} is out of range")]
    UnknownLabel(LabelId),
    #[error("unsupported taxonomy dump version {0}")]
    UnsupportedVersion(u32),
}

/// Immutable rooted tree over label ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    root_name: String,
    names: Vec<String>,
    name_to_id: HashMap<String, LabelId>,
    /// `None` when the parent is the root.
    parent: Vec<Option<LabelId>>,
    children: Vec<Vec<LabelId>>,
    root_children: Vec<LabelId>,
    depth: Vec<usize>,
    height: Vec<usize>,
    min_leaf_dist: Vec<usize>,
}

/// Parent slot during parsing: unassigned, the root, or a label.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Slot {
    Unassigned,
    Root,
    Label(LabelId),
}

impl Taxonomy {
    /// Parses taxonomy lines. Blank lines are ignored.
    pub fn parse<I, S>(lines: I) -> Result<Self, TaxonomyError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut root_name: Option<String> = None;
        let mut names: Vec<String> = Vec::new();
        let mut name_to_id: HashMap<String, LabelId> = HashMap::new();
        let mut slots: Vec<Slot> = Vec::new();

        let mut intern = |name: &str, names: &mut Vec<String>, slots: &mut Vec<Slot>| {
            *name_to_id.entry(name.to_string()).or_insert_with(|| {
                names.push(name.to_string());
                slots.push(Slot::Unassigned);
                names.len() - 1
            })
        };

        for (lineno, line) in lines.into_iter().enumerate() {
            let line = line.as_ref().trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split('\t').map(str::trim).filter(|f| !f.is_empty());
            let Some(parent_name) = fields.next() else {
                continue;
            };
            let root = root_name.get_or_insert_with(|| parent_name.to_string()).clone();
            let parent_slot =
                if parent_name == root { Slot::Root } else { Slot::Label(intern(parent_name, &mut names, &mut slots)) };
            for child in fields {
                if child == root {
                    return Err(TaxonomyError::CycleDetected { label: root });
                }
                let id = intern(child, &mut names, &mut slots);
                if slots[id] != Slot::Unassigned {
                    return Err(TaxonomyError::MultipleParents { label: child.to_string(), line: lineno + 1 });
                }
                slots[id] = parent_slot;
            }
        }

        let root_name = root_name.ok_or(TaxonomyError::EmptyTaxonomy)?;
        if names.is_empty() {
            return Err(TaxonomyError::EmptyTaxonomy);
        }
        check_rooted(&names, &slots)?;
        let parent = slots
            .into_iter()
            .map(|s| match s {
                Slot::Label(p) => Some(p),
                _ => None,
            })
            .collect();
        Ok(Self::from_parents(root_name, names, parent))
    }

    /// Builds all indexes from a validated parent array.
    fn from_parents(root_name: String, names: Vec<String>, parent: Vec<Option<LabelId>>) -> Self {
        let n = names.len();
        let mut children = vec![Vec::new(); n];
        let mut root_children = Vec::new();
        for (c, p) in parent.iter().enumerate() {
            match p {
                Some(p) => children[*p].push(c),
                None => root_children.push(c),
            }
        }

        // Breadth-first order from the root: parents precede children.
        let mut order = Vec::with_capacity(n);
        let mut depth = vec![0; n];
        let mut queue: std::collections::VecDeque<LabelId> = root_children.iter().copied().collect();
        for &c in &root_children {
            depth[c] = 1;
        }
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &c in &children[v] {
                depth[c] = depth[v] + 1;
                queue.push_back(c);
            }
        }

        let mut height = vec![0; n];
        let mut min_leaf_dist = vec![0; n];
        for &v in order.iter().rev() {
            if !children[v].is_empty() {
                height[v] = 1 + children[v].iter().map(|&c| height[c]).max().unwrap_or(0);
                min_leaf_dist[v] = 1 + children[v].iter().map(|&c| min_leaf_dist[c]).min().unwrap_or(0);
            }
        }

        let name_to_id = names.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Self { root_name, names, name_to_id, parent, children, root_children, depth, height, min_leaf_dist }
    }

    pub fn parse_str(text: &str) -> Result<Self, TaxonomyError> {
        Self::parse(text.lines())
    }

    /// Number of classifiable (non-root) labels.
    pub fn num_labels(&self) -> usize {
        self.names.len()
    }

    pub fn root_name(&self) -> &str {
        &self.root_name
    }

    pub fn name(&self, id: LabelId) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn id(&self, name: &str) -> Option<LabelId> {
        self.name_to_id.get(name).copied()
    }

    /// Parent label, or `None` for children of the root.
    pub fn parent(&self, id: LabelId) -> Option<LabelId> {
        self.parent[id]
    }

    pub fn children(&self, id: LabelId) -> &[LabelId] {
        &self.children[id]
    }

    pub fn root_children(&self) -> &[LabelId] {
        &self.root_children
    }

    /// Hops from the root; children of the root have depth 1.
    pub fn depth(&self, id: LabelId) -> usize {
        self.depth[id]
    }

    /// Longest distance to a leaf within the subtree; leaves have height 0.
    pub fn height(&self, id: LabelId) -> usize {
        self.height[id]
    }

    /// Shortest distance to a leaf within the subtree.
    pub fn min_leaf_distance(&self, id: LabelId) -> usize {
        self.min_leaf_dist[id]
    }

    pub fn is_leaf(&self, id: LabelId) -> bool {
        self.children[id].is_empty()
    }

    pub fn max_depth(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    pub fn max_height(&self) -> usize {
        self.height.iter().copied().max().unwrap_or(0)
    }

    /// Labels that have at least one child, in id order.
    pub fn internal_labels(&self) -> impl Iterator<Item = LabelId> + '_ {
        (0..self.num_labels()).filter(|&i| !self.children[i].is_empty())
    }

    pub fn leaves(&self) -> impl Iterator<Item = LabelId> + '_ {
        (0..self.num_labels()).filter(|&i| self.children[i].is_empty())
    }

    /// Edges `(parent, child)` between non-root labels, in child-id order.
    pub fn edges(&self) -> impl Iterator<Item = (LabelId, LabelId)> + '_ {
        self.parent.iter().enumerate().filter_map(|(c, p)| p.map(|p| (p, c)))
    }

    /// Path from `id` up to (excluding) the root, starting with `id`.
    pub fn ancestors_inclusive(&self, id: LabelId) -> Vec<LabelId> {
        let mut out = vec![id];
        let mut cur = id;
        while let Some(p) = self.parent[cur] {
            out.push(p);
            cur = p;
        }
        out
    }

    fn check_id(&self, id: LabelId) -> Result<(), TaxonomyError> {
        if id < self.num_labels() {
            Ok(())
        } else {
            Err(TaxonomyError::UnknownLabel(id))
        }
    }

    /// Labels sharing `id`'s parent, excluding `id`. Root children are
    /// siblings of each other.
    pub fn sibling_set(&self, id: LabelId) -> Result<Vec<LabelId>, TaxonomyError> {
        self.check_id(id)?;
        let group = match self.parent[id] {
            Some(p) => &self.children[p],
            None => &self.root_children,
        };
        Ok(group.iter().copied().filter(|&j| j != id).collect())
    }

    /// Strict descendants of `id`, in pre-order.
    pub fn subtree_set(&self, id: LabelId) -> Result<Vec<LabelId>, TaxonomyError> {
        self.check_id(id)?;
        let mut out = Vec::new();
        let mut stack: Vec<LabelId> = self.children[id].iter().rev().copied().collect();
        while let Some(v) = stack.pop() {
            out.push(v);
            stack.extend(self.children[v].iter().rev().copied());
        }
        Ok(out)
    }

    pub fn sibling_mask(&self, id: LabelId) -> Result<LabelMask, TaxonomyError> {
        Ok(LabelMask::from_ids(self.num_labels(), self.sibling_set(id)?))
    }

    pub fn subtree_mask(&self, id: LabelId) -> Result<LabelMask, TaxonomyError> {
        Ok(LabelMask::from_ids(self.num_labels(), self.subtree_set(id)?))
    }

    /// Checks parent closure and returns the canonical label set.
    pub fn validate_labelset(&self, labels: &[LabelId]) -> Result<LabelSet, TaxonomyError> {
        for &l in labels {
            self.check_id(l)?;
        }
        let set = LabelSet::new(labels.iter().copied());
        for &l in set.as_slice() {
            if let Some(p) = self.parent[l] {
                if !set.contains(p) {
                    return Err(TaxonomyError::OrphanLabel {
                        label: self.names[l].clone(),
                        parent: self.names[p].clone(),
                    });
                }
            }
        }
        Ok(set)
    }

    /// Union of the root paths of `leaves` (or any labels).
    pub fn close_upwards(&self, labels: &[LabelId]) -> LabelSet {
        LabelSet::new(labels.iter().flat_map(|&l| self.ancestors_inclusive(l)))
    }

    /// Serializes back into taxonomy-file lines: the root line first, then one
    /// line per internal label in id order.
    pub fn to_lines(&self) -> Vec<String> {
        let mut lines = Vec::new();
        let mut root_line = self.root_name.clone();
        for &c in &self.root_children {
            root_line.push('\t');
            root_line.push_str(&self.names[c]);
        }
        lines.push(root_line);
        for p in self.internal_labels() {
            let mut line = self.names[p].clone();
            for &c in &self.children[p] {
                line.push('\t');
                line.push_str(&self.names[c]);
            }
            lines.push(line);
        }
        lines
    }

    /// Id-preserving dump of the index.
    pub fn to_dump(&self) -> TaxonomyDump {
        TaxonomyDump {
            version: DUMP_VERSION,
            root: self.root_name.clone(),
            labels: self
                .names
                .iter()
                .zip(&self.parent)
                .map(|(name, p)| DumpLabel { name: name.clone(), parent: p.map(|p| self.names[p].clone()) })
                .collect(),
        }
    }

    pub fn from_dump(dump: &TaxonomyDump) -> Result<Self, TaxonomyError> {
        if dump.version != DUMP_VERSION {
            return Err(TaxonomyError::UnsupportedVersion(dump.version));
        }
        if dump.labels.is_empty() {
            return Err(TaxonomyError::EmptyTaxonomy);
        }
        let names: Vec<String> = dump.labels.iter().map(|l| l.name.clone()).collect();
        let mut index = HashMap::new();
        for (i, n) in names.iter().enumerate() {
            if n == &dump.root || index.insert(n.clone(), i).is_some() {
                return Err(TaxonomyError::MultipleParents { label: n.clone(), line: i + 1 });
            }
        }
        let mut slots = Vec::with_capacity(names.len());
        for l in &dump.labels {
            slots.push(match &l.parent {
                None => Slot::Root,
                Some(p) if p == &dump.root => Slot::Root,
                Some(p) => {
                    Slot::Label(*index.get(p).ok_or_else(|| TaxonomyError::DisconnectedNode { label: l.name.clone() })?)
                }
            });
        }
        check_rooted(&names, &slots)?;
        let parent = slots
            .into_iter()
            .map(|s| match s {
                Slot::Label(p) => Some(p),
                _ => None,
            })
            .collect();
        Ok(Self::from_parents(dump.root.clone(), names, parent))
    }
}

/// Every label must reach the root through parent links without revisiting.
fn check_rooted(names: &[String], slots: &[Slot]) -> Result<(), TaxonomyError> {
    // 0 = unvisited, 1 = on current walk, 2 = known to reach the root
    let mut state = vec![0u8; slots.len()];
    for start in 0..slots.len() {
        let mut walk = Vec::new();
        let mut cur = start;
        loop {
            match state[cur] {
                2 => break,
                1 => return Err(TaxonomyError::CycleDetected { label: names[cur].clone() }),
                _ => {}
            }
            state[cur] = 1;
            walk.push(cur);
            match slots[cur] {
                Slot::Root => break,
                Slot::Unassigned => return Err(TaxonomyError::DisconnectedNode { label: names[cur].clone() }),
                Slot::Label(p) => cur = p,
            }
        }
        for v in walk {
            state[v] = 2;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyDump {
    pub version: u32,
    pub root: String,
    pub labels: Vec<DumpLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DumpLabel {
    pub name: String,
    pub parent: Option<String>,
}

/// A document's positive labels: sorted, duplicate-free, root excluded.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct LabelSet {
    labels: Vec<LabelId>,
}

impl LabelSet {
    /// Canonicalizes without validating parent closure; see
    /// [`Taxonomy::validate_labelset`].
    pub fn new<I: IntoIterator<Item = LabelId>>(labels: I) -> Self {
        let mut labels: Vec<LabelId> = labels.into_iter().collect();
        labels.sort_unstable();
        labels.dedup();
        Self { labels }
    }

    pub fn as_slice(&self) -> &[LabelId] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn contains(&self, id: LabelId) -> bool {
        self.labels.binary_search(&id).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = LabelId> + '_ {
        self.labels.iter().copied()
    }

    pub fn to_mask(&self, num_labels: usize) -> LabelMask {
        LabelMask::from_ids(num_labels, self.iter())
    }
}
