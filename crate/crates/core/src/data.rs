//! Corpus ingestion, vocabulary construction and the synthetic corpus
//! generator.
//!
//! Corpora are JSON lines with a token list and a label-name list:
//!
//! ```text
//! {"token": ["deep", "learning"], "label": ["CS", "Machine Learning"]}
//! ```
//!
//! `doc_token` / `doc_label` are accepted as aliases, and an optional
//! `feature` array carries a precomputed document vector.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::taxonomy::{LabelId, LabelSet, Taxonomy, TaxonomyError};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot access {path}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: malformed record: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: unknown label name `{name}`")]
    UnknownLabelName { line: usize, name: String },
    #[error("line {line}: label `{label}` present without its parent `{parent}`")]
    OrphanLabel { line: usize, label: String, parent: String },
    #[error("synthetic spec is infeasible: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.display().to_string(), source }
}

/// On-disk corpus record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub token: Vec<String>,
    pub label: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<Vec<f64>>,
}

/// A record resolved against a taxonomy and vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    pub token_ids: Vec<usize>,
    pub labels: LabelSet,
    pub feature: Option<Vec<f64>>,
}

fn string_list(v: &Value, line: usize, field: &str) -> Result<Vec<String>, DataError> {
    match v {
        Value::String(s) => Ok(s.split_whitespace().map(str::to_string).collect()),
        Value::Array(items) => items
            .iter()
            .map(|it| match it {
                Value::String(s) => Ok(s.clone()),
                other => Err(DataError::MalformedLine {
                    line,
                    reason: format!("`{field}` entries must be strings, found {other}"),
                }),
            })
            .collect(),
        _ => Err(DataError::MalformedLine { line, reason: format!("`{field}` must be a list of strings") }),
    }
}

/// Parses one JSON line into a record; `line` is 1-based and used for the
/// default id and error messages.
pub fn parse_record(text: &str, line: usize) -> Result<CorpusRecord, DataError> {
    let malformed = |reason: String| DataError::MalformedLine { line, reason };
    let value: Value = serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| malformed("expected a JSON object".into()))?;
    let field = |names: [&'static str; 2]| names.iter().find_map(|n| obj.get(*n).map(|v| (*n, v)));

    let token = match field(["token", "doc_token"]) {
        Some((name, v)) => string_list(v, line, name)?,
        None => Vec::new(),
    };
    let (label_field, labels) =
        field(["label", "doc_label"]).ok_or_else(|| malformed("missing `label` field".into()))?;
    let label = string_list(labels, line, label_field)?;
    let feature = match obj.get("feature") {
        None | Some(Value::Null) => None,
        Some(Value::Array(xs)) => Some(
            xs.iter()
                .map(|x| x.as_f64().ok_or_else(|| malformed("`feature` must hold numbers".into())))
                .collect::<Result<Vec<_>, _>>()?,
        ),
        Some(_) => return Err(malformed("`feature` must be an array".into())),
    };
    if token.is_empty() && feature.is_none() {
        return Err(malformed("document has neither tokens nor a feature vector".into()));
    }
    let id = match obj.get("id") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => format!("line-{line}"),
    };
    Ok(CorpusRecord { id, token, label, feature })
}

pub fn read_records(path: &Path) -> Result<Vec<CorpusRecord>, DataError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_record(&line, i + 1)?);
    }
    Ok(out)
}

pub fn write_records(path: &Path, records: &[CorpusRecord]) -> Result<(), DataError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("record serializes");
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Resolves label names and token ids. Root mentions in label lists are
/// dropped since the root is implicit.
pub fn resolve_record(
    rec: &CorpusRecord,
    line: usize,
    tax: &Taxonomy,
    vocab: &Vocabulary,
) -> Result<Document, DataError> {
    let mut ids = Vec::with_capacity(rec.label.len());
    for name in &rec.label {
        if name == tax.root_name() {
            continue;
        }
        ids.push(tax.id(name).ok_or_else(|| DataError::UnknownLabelName { line, name: name.clone() })?);
    }
    let labels = tax.validate_labelset(&ids).map_err(|e| match e {
        TaxonomyError::OrphanLabel { label, parent } => DataError::OrphanLabel { line, label, parent },
        other => DataError::Taxonomy(other),
    })?;
    Ok(Document {
        id: rec.id.clone(),
        token_ids: rec.token.iter().map(|t| vocab.id(t)).collect(),
        labels,
        feature: rec.feature.clone(),
    })
}

pub fn resolve_records(
    records: &[CorpusRecord],
    tax: &Taxonomy,
    vocab: &Vocabulary,
) -> Result<Vec<Document>, DataError> {
    records.iter().enumerate().map(|(i, r)| resolve_record(r, i + 1, tax, vocab)).collect()
}

/// Reads and resolves a JSON-lines corpus file; errors carry line numbers.
pub fn load_corpus(path: &Path, tax: &Taxonomy, vocab: &Vocabulary) -> Result<Vec<Document>, DataError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse_record(&line, i + 1)?;
        out.push(resolve_record(&rec, i + 1, tax, vocab)?);
    }
    Ok(out)
}

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";

/// Token-to-id map; ids 0 and 1 are the padding and unknown tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub const PAD_ID: usize = 0;
    pub const UNK_ID: usize = 1;

    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }

    /// Frequency-ranked tokens with count `>= min_count`; equal counts are
    /// ordered lexicographically. `max_size` bounds the kept tokens
    /// (specials excluded).
    pub fn build<'a, I>(docs: I, min_count: usize, max_size: Option<usize>) -> Self
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for doc in docs {
            for t in doc {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> =
            counts.into_iter().filter(|(t, c)| *c >= min_count.max(1) && *t != PAD && *t != UNK).collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        if let Some(max) = max_size {
            ranked.truncate(max);
        }
        let tokens = [PAD, UNK].into_iter().chain(ranked.into_iter().map(|(t, _)| t)).map(str::to_string).collect();
        Self::from_tokens(tokens)
    }

    pub fn from_records(records: &[CorpusRecord], min_count: usize, max_size: Option<usize>) -> Self {
        Self::build(records.iter().map(|r| r.token.as_slice()), min_count, max_size)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(Self::UNK_ID)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// SHA-256 over the id-ordered token list.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        std::fs::write(path, text).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        if tokens.len() < 2 || tokens[0] != PAD || tokens[1] != UNK {
            return Err(DataError::MalformedLine {
                line: 1,
                reason: "vocabulary must start with the padding and unknown tokens".into(),
            });
        }
        Ok(Self::from_tokens(tokens))
    }
}

/// Parameters of the synthetic hierarchical corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    /// Children per node at each level; its length is the tree depth.
    pub branching: Vec<usize>,
    pub train_docs: usize,
    pub dev_docs: usize,
    pub test_docs: usize,
    pub tokens_per_doc: usize,
    /// Distinct signature tokens owned by each label.
    pub signature_tokens: usize,
    /// Probability that an emitted token is replaced by a noise token.
    pub noise_rate: f64,
    /// Probability of adding a second root-to-leaf path.
    pub multipath_prob: f64,
    /// Size of the shared noise-token pool.
    pub noise_vocab: usize,
    /// Upper bound on distinct tokens the generator may use.
    pub vocab_budget: usize,
    /// Zipf exponent over leaves; 0 draws leaves uniformly.
    pub leaf_skew: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            branching: vec![3, 3, 3],
            train_docs: 2000,
            dev_docs: 500,
            test_docs: 1000,
            tokens_per_doc: 12,
            signature_tokens: 4,
            noise_rate: 0.5,
            multipath_prob: 0.1,
            noise_vocab: 300,
            vocab_budget: 5000,
            leaf_skew: 1.0,
            seed: 2023,
        }
    }
}

impl SynthSpec {
    pub fn depth(&self) -> usize {
        self.branching.len()
    }

    /// Number of labels the branching factors produce.
    pub fn num_labels(&self) -> usize {
        let mut level = 1;
        let mut total = 0;
        for &b in &self.branching {
            level *= b;
            total += level;
        }
        total
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::Infeasible(m.to_string()));
        if self.branching.is_empty() || self.branching.contains(&0) {
            return bad("branching needs at least one level, each with at least one child");
        }
        for (name, r) in [("noise_rate", self.noise_rate), ("multipath_prob", self.multipath_prob)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(DataError::Infeasible(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.leaf_skew < 0.0 || !self.leaf_skew.is_finite() {
            return bad("leaf_skew must be finite and non-negative");
        }
        if self.signature_tokens == 0 || self.tokens_per_doc == 0 {
            return bad("signature_tokens and tokens_per_doc must be positive");
        }
        if self.noise_rate > 0.0 && self.noise_vocab == 0 {
            return bad("noise requires a non-empty noise vocabulary");
        }
        if self.train_docs == 0 {
            return bad("train split is empty");
        }
        let needed = self.num_labels() * self.signature_tokens + self.noise_vocab;
        if needed > self.vocab_budget {
            return Err(DataError::Infeasible(format!(
                "{needed} distinct tokens needed but the vocabulary budget is {}",
                self.vocab_budget
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub taxonomy_lines: Vec<String>,
    pub taxonomy: Taxonomy,
    pub train: Vec<CorpusRecord>,
    pub dev: Vec<CorpusRecord>,
    pub test: Vec<CorpusRecord>,
}

fn signature(name: &str, k: usize) -> String {
    format!("{}_{k}", name.to_lowercase())
}

/// Builds the tree and three disjoint splits, deterministically in `spec`.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<SynthCorpus, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Names: C0, C0.1, C0.1.2, ...
    let mut lines = Vec::new();
    let mut frontier: Vec<String> = Vec::new();
    let mut root_line = String::from("Root");
    for i in 0..spec.branching[0] {
        let name = format!("C{i}");
        root_line.push('\t');
        root_line.push_str(&name);
        frontier.push(name);
    }
    lines.push(root_line);
    for &b in &spec.branching[1..] {
        let mut next = Vec::new();
        for parent in &frontier {
            let mut line = parent.clone();
            for j in 0..b {
                let name = format!("{parent}.{j}");
                line.push('\t');
                line.push_str(&name);
                next.push(name);
            }
            lines.push(line);
        }
        frontier = next;
    }
    let tax = Taxonomy::parse(&lines)?;

    let leaves: Vec<LabelId> = tax.leaves().collect();
    let mut ranks: Vec<usize> = (0..leaves.len()).collect();
    ranks.shuffle(&mut rng);
    let weights: Vec<f64> = ranks.iter().map(|&r| 1.0 / ((r + 1) as f64).powf(spec.leaf_skew)).collect();
    let total_weight: f64 = weights.iter().sum();
    let draw_leaf = |rng: &mut ChaCha8Rng| {
        let mut u = rng.random::<f64>() * total_weight;
        for (leaf, w) in leaves.iter().zip(&weights) {
            if u < *w {
                return *leaf;
            }
            u -= w;
        }
        *leaves.last().unwrap()
    };

    let make_split = |prefix: &str, n: usize, rng: &mut ChaCha8Rng| -> Vec<CorpusRecord> {
        (0..n)
            .map(|d| {
                let mut picked = vec![draw_leaf(rng)];
                if leaves.len() > 1 && rng.random::<f64>() < spec.multipath_prob {
                    loop {
                        let other = draw_leaf(rng);
                        if other != picked[0] {
                            picked.push(other);
                            break;
                        }
                    }
                }
                let positives = tax.close_upwards(&picked);
                let pos: Vec<LabelId> = positives.iter().collect();

                let mut tokens: Vec<String> =
                    pos.iter().map(|&l| signature(tax.name(l), rng.random_range(0..spec.signature_tokens))).collect();
                while tokens.len() < spec.tokens_per_doc {
                    let l = pos[rng.random_range(0..pos.len())];
                    tokens.push(signature(tax.name(l), rng.random_range(0..spec.signature_tokens)));
                }
                tokens.shuffle(rng);
                for t in tokens.iter_mut() {
                    if rng.random::<f64>() < spec.noise_rate {
                        *t = format!("w{}", rng.random_range(0..spec.noise_vocab));
                    }
                }
                CorpusRecord {
                    id: format!("{prefix}-{d:06}"),
                    token: tokens,
                    label: pos.iter().map(|&l| tax.name(l).to_string()).collect(),
                    feature: None,
                }
            })
            .collect()
    };
    let train = make_split("train", spec.train_docs, &mut rng);
    let dev = make_split("dev", spec.dev_docs, &mut rng);
    let test = make_split("test", spec.test_docs, &mut rng);

    Ok(SynthCorpus { taxonomy_lines: lines, taxonomy: tax, train, dev, test })
}
