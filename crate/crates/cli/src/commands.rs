use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hilight_core::checkpoint::{document_space_csv, label_space_csv};
use hilight_core::data::{self, generate_synthetic};
use hilight_core::model::{encoder_param_count, head_param_count, param_count};
use hilight_core::train::{evaluate, train_with};
use hilight_core::{Checkpoint, NegativeIndex, NegativeMode, SynthSpec, Taxonomy, TrainConfig, Vocabulary};
use serde::Serialize;

use crate::args::{Command, EvalArgs, ExportArgs, InspectArgs, NegativesArg, ParamCountArgs, SynthArgs, TrainArgs};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const CONFIG_FILE: &str = "config.json";
pub const LOG_FILE: &str = "train_log.jsonl";

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(*a),
        Command::Eval(a) => eval(a),
        Command::InspectNegatives(a) => inspect(a),
        Command::ExportLabelSpace(a) => export(a),
        Command::ParamCount(a) => param_count_cmd(a),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_taxonomy(path: &Path) -> Result<Taxonomy> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Taxonomy::parse_str(&text).with_context(|| format!("taxonomy {}", path.display()))
}

fn out_dir(path: &Path) -> Result<PathBuf> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(path.to_path_buf())
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(p) => read_json::<SynthSpec>(p)?,
        None => SynthSpec::default(),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let corpus = generate_synthetic(&spec)?;
    let dir = out_dir(&a.out)?;
    let mut tax = corpus.taxonomy_lines.join("\n");
    tax.push('\n');
    fs::write(dir.join("taxonomy.txt"), tax)?;
    data::write_records(&dir.join("train.jsonl"), &corpus.train)?;
    data::write_records(&dir.join("dev.jsonl"), &corpus.dev)?;
    data::write_records(&dir.join("test.jsonl"), &corpus.test)?;
    write_json(&dir.join("spec.json"), &spec)?;
    write_json(&dir.join("train_config.json"), &TrainConfig::synthetic_preset())?;
    println!(
        "synth: labels={} train={} dev={} test={} out={}",
        corpus.taxonomy.num_labels(),
        corpus.train.len(),
        corpus.dev.len(),
        corpus.test.len(),
        dir.display()
    );
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => read_json::<TrainConfig>(p)?,
        None => TrainConfig::default(),
    };
    a.overrides.apply(&mut cfg);
    cfg.validate()?;

    let tax = load_taxonomy(&a.taxonomy)?;
    let train_records = data::read_records(&a.train)?;
    let vocab = Vocabulary::from_records(&train_records, cfg.min_count, cfg.max_vocab);
    let train_docs =
        data::resolve_records(&train_records, &tax, &vocab).with_context(|| format!("corpus {}", a.train.display()))?;
    let dev_docs = data::load_corpus(&a.dev, &tax, &vocab).with_context(|| format!("corpus {}", a.dev.display()))?;

    let dir = out_dir(&a.out)?;
    write_json(&dir.join(CONFIG_FILE), &cfg)?;
    vocab.save(&dir.join(VOCAB_FILE))?;

    let log_path = dir.join(LOG_FILE);
    let mut log = BufWriter::new(File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?);
    let mut log_err = None;
    let outcome = train_with(&train_docs, &dev_docs, &tax, vocab.len(), &cfg, |entry| {
        let line = serde_json::to_string(entry).expect("log entry serializes");
        if let Err(e) = writeln!(log, "{line}").and_then(|_| log.flush()) {
            log_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_err {
        return Err(e).context("writing training log");
    }

    Checkpoint::new(outcome.best.clone(), &vocab, &tax).save(&dir.join(CHECKPOINT_FILE))?;
    let best = &outcome.log[outcome.best_epoch];
    println!(
        "train: best_epoch={} dev_micro_f1={:.4} dev_macro_f1={:.4} dev_violation_rate={:.4} out={}",
        best.epoch,
        best.dev_micro_f1,
        best.dev_macro_f1,
        best.dev_violation_rate,
        dir.display()
    );
    Ok(())
}

struct LoadedModel {
    checkpoint: Checkpoint,
    vocab: Vocabulary,
    config: Option<TrainConfig>,
}

fn load_model(dir: &Path, tax: &Taxonomy) -> Result<LoadedModel> {
    let checkpoint = Checkpoint::load(&dir.join(CHECKPOINT_FILE))?;
    let vocab = Vocabulary::load(&dir.join(VOCAB_FILE))?;
    checkpoint.verify(&vocab, tax)?;
    let cfg_path = dir.join(CONFIG_FILE);
    let config = if cfg_path.exists() { Some(read_json(&cfg_path)?) } else { None };
    Ok(LoadedModel { checkpoint, vocab, config })
}

#[derive(Serialize)]
struct LabelRow<'a> {
    label: &'a str,
    f1: f64,
    tp: u64,
    fp: u64,
    #[serde(rename = "fn")]
    fn_: u64,
    support: u64,
}

#[derive(Serialize)]
struct Report<'a> {
    documents: usize,
    threshold: f64,
    micro_f1: f64,
    macro_f1: f64,
    labels: Vec<LabelRow<'a>>,
    consistency: &'a hilight_core::ConsistencyReport,
}

fn eval(a: EvalArgs) -> Result<()> {
    let tax = load_taxonomy(&a.taxonomy)?;
    let model = load_model(&a.model, &tax)?;
    let mut predict = model.config.map(|c| c.predict).unwrap_or_default();
    if let Some(t) = a.threshold {
        predict.threshold = t;
    }
    predict.validate()?;
    let docs =
        data::load_corpus(&a.data, &tax, &model.vocab).with_context(|| format!("corpus {}", a.data.display()))?;
    let rep = evaluate(&model.checkpoint.params, &docs, &tax, &predict)?;

    let labels = (0..tax.num_labels())
        .map(|i| LabelRow {
            label: tax.name(i),
            f1: rep.labelwise_f1[i],
            tp: rep.counts.tp[i],
            fp: rep.counts.fp[i],
            fn_: rep.counts.fn_[i],
            support: rep.counts.support(i),
        })
        .collect::<Vec<_>>();
    let dir = out_dir(&a.out)?;
    if a.csv {
        let mut csv = String::from("label,depth,support,f1\n");
        for (i, row) in labels.iter().enumerate() {
            csv.push_str(&format!("{},{},{},{}\n", csv_field(row.label), tax.depth(i), row.support, row.f1));
        }
        fs::write(dir.join("labelwise_f1.csv"), csv)?;
    }
    let report = Report {
        documents: docs.len(),
        threshold: predict.threshold,
        micro_f1: rep.micro_f1,
        macro_f1: rep.macro_f1,
        labels,
        consistency: &rep.consistency,
    };
    write_json(&dir.join("report.json"), &report)?;
    println!(
        "eval: documents={} micro_f1={:.4} macro_f1={:.4} violation_rate={:.4}",
        docs.len(),
        rep.micro_f1,
        rep.macro_f1,
        rep.consistency.violation_rate
    );
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn inspect(a: InspectArgs) -> Result<()> {
    let tax = load_taxonomy(&a.taxonomy)?;
    let Some(label) = tax.id(&a.label) else {
        bail!("unknown label `{}`", a.label);
    };
    let positive_ids = match &a.positives {
        Some(names) => {
            let mut ids = Vec::with_capacity(names.len() + 1);
            for n in names.iter().map(|n| n.trim()).filter(|n| !n.is_empty()) {
                ids.push(tax.id(n).with_context(|| format!("unknown label `{n}`"))?);
            }
            if !ids.contains(&label) {
                ids.push(label);
            }
            ids
        }
        None => tax.ancestors_inclusive(label),
    };
    let positives = tax.validate_labelset(&positive_ids)?;
    let mode = match a.negatives {
        NegativesArg::LocalHard => NegativeMode::LocalHard,
        NegativesArg::SiblingsOnly => NegativeMode::SiblingsOnly,
        NegativesArg::SubtreeOnly => NegativeMode::SubtreeOnly,
        NegativesArg::RandomK => NegativeMode::RandomK { k: None, seed: TrainConfig::default().seed },
    };
    let index = NegativeIndex::build(&tax, mode)?;
    let names = |ids: Vec<usize>| ids.into_iter().map(|i| tax.name(i)).collect::<Vec<_>>().join(",");
    println!("label: {}", a.label);
    println!("positives: {}", names(positives.iter().collect()));
    println!("siblings: {}", names(tax.sibling_set(label)?));
    println!("subtree: {}", names(tax.subtree_set(label)?));
    println!("candidates: {}", names(index.candidates(label).to_vec()));
    println!("hard_negatives: {}", names(index.hard_negatives(label, &positives, 0)?.to_vec()));
    Ok(())
}

fn export(a: ExportArgs) -> Result<()> {
    let tax = load_taxonomy(&a.taxonomy)?;
    let model = load_model(&a.model, &tax)?;
    let dir = out_dir(&a.out)?;
    let params = &model.checkpoint.params;
    fs::write(dir.join("labels.csv"), label_space_csv(params, &tax))?;
    let mut docs_written = 0;
    if let Some(path) = &a.data {
        let docs = data::load_corpus(path, &tax, &model.vocab).with_context(|| format!("corpus {}", path.display()))?;
        fs::write(dir.join("docs.csv"), document_space_csv(params, &docs)?)?;
        docs_written = docs.len();
    }
    println!("export: labels={} documents={} out={}", tax.num_labels(), docs_written, dir.display());
    Ok(())
}

fn group_digits(n: usize) -> String {
    let s = n.to_string();
    let mut out = String::with_capacity(s.len() + s.len() / 3);
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

fn param_count_cmd(a: ParamCountArgs) -> Result<()> {
    let head = head_param_count(a.d_h, a.c);
    println!("head parameters: {}", group_digits(head));
    if a.vocab > 0 || a.d_e > 0 {
        println!("encoder parameters: {}", group_digits(encoder_param_count(a.vocab, a.d_e, a.d_h)));
        println!("total parameters: {}", group_digits(param_count(a.vocab, a.d_e, a.d_h, a.c)));
    }
    Ok(())
}
