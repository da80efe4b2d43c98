use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hilight_core::{BceMode, LclSpace, NegativeMode, PlateauRule, ReverseDepth, ScheduleMode, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "hilight", version, about = "Hierarchical text classification with local contrastive learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic hierarchical corpus.
    Synth(SynthArgs),
    /// Train a model and write checkpoint, vocabulary and epoch log.
    Train(Box<TrainArgs>),
    /// Evaluate a trained model on a corpus.
    Eval(EvalArgs),
    /// Show candidate and hard-negative sets for a label.
    InspectNegatives(InspectArgs),
    /// Write head weight rows and document vectors as CSV.
    ExportLabelSpace(ExportArgs),
    /// Print the trainable parameter count for given dimensions.
    ParamCount(ParamCountArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON generator spec; fields not given take their defaults.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub taxonomy: PathBuf,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    /// JSON training config; explicit flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: ConfigOverrides,
}

/// One flag per config field; unset flags leave the config untouched.
#[derive(Debug, Default, Args)]
pub struct ConfigOverrides {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr_encoder: Option<f64>,
    #[arg(long)]
    pub lr_head: Option<f64>,
    #[arg(long)]
    pub adam_beta1: Option<f64>,
    #[arg(long)]
    pub adam_beta2: Option<f64>,
    #[arg(long)]
    pub adam_eps: Option<f64>,
    #[arg(long)]
    pub plateau_patience: Option<usize>,
    #[arg(long)]
    pub plateau_factor: Option<f64>,
    #[arg(long, value_enum)]
    pub plateau_rule: Option<PlateauRuleArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub min_count: Option<usize>,
    #[arg(long)]
    pub max_vocab: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, value_enum)]
    pub bce_mode: Option<BceModeArg>,
    #[arg(long, value_enum)]
    pub lcl_space: Option<LclSpaceArg>,
    #[arg(long)]
    pub rec_reg_weight: Option<f64>,
    #[arg(long)]
    pub hilcl_mean: Option<bool>,
    /// Epochs per curriculum level.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum)]
    pub schedule: Option<ScheduleArg>,
    #[arg(long, value_enum)]
    pub drev: Option<DrevArg>,
    #[arg(long, value_enum)]
    pub negatives: Option<NegativesArg>,
    /// Sample size for random negatives (default: mean local-hard count).
    #[arg(long)]
    pub random_k: Option<usize>,
    #[arg(long)]
    pub negative_seed: Option<u64>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

impl ConfigOverrides {
    pub fn apply(&self, cfg: &mut TrainConfig) {
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field { $target = v.into(); })*
            };
        }
        set! {
            epochs => cfg.epochs,
            lr_encoder => cfg.lr_encoder,
            lr_head => cfg.lr_head,
            adam_beta1 => cfg.adam_beta1,
            adam_beta2 => cfg.adam_beta2,
            adam_eps => cfg.adam_eps,
            plateau_patience => cfg.plateau_patience,
            plateau_factor => cfg.plateau_factor,
            plateau_rule => cfg.plateau_rule,
            seed => cfg.seed,
            batch_size => cfg.batch_size,
            dropout => cfg.dropout,
            embed_dim => cfg.embed_dim,
            hidden_dim => cfg.hidden_dim,
            min_count => cfg.min_count,
            lambda => cfg.loss.lambda,
            bce_mode => cfg.loss.bce_mode,
            lcl_space => cfg.loss.lcl_space,
            rec_reg_weight => cfg.loss.rec_reg_weight,
            hilcl_mean => cfg.loss.hilcl_mean,
            k => cfg.schedule.k,
            schedule => cfg.schedule.mode,
            drev => cfg.schedule.drev,
            threshold => cfg.predict.threshold,
        }
        if let Some(v) = self.max_vocab {
            cfg.max_vocab = Some(v);
        }
        if let Some(mode) = self.negatives {
            cfg.negatives = match mode {
                NegativesArg::LocalHard => NegativeMode::LocalHard,
                NegativesArg::SiblingsOnly => NegativeMode::SiblingsOnly,
                NegativesArg::SubtreeOnly => NegativeMode::SubtreeOnly,
                NegativesArg::RandomK => NegativeMode::RandomK { k: None, seed: cfg.seed },
            };
        }
        if let NegativeMode::RandomK { k, seed } = &mut cfg.negatives {
            if self.random_k.is_some() {
                *k = self.random_k;
            }
            if let Some(s) = self.negative_seed {
                *seed = s;
            }
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub taxonomy: PathBuf,
    /// Corpus to evaluate (JSON lines).
    #[arg(long)]
    pub data: PathBuf,
    /// Directory written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Also write label-wise F1 as CSV.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub taxonomy: PathBuf,
    #[arg(long)]
    pub label: String,
    /// Comma-separated positive label names; defaults to the label's root path.
    #[arg(long, value_delimiter = ',')]
    pub positives: Option<Vec<String>>,
    #[arg(long, value_enum, default_value = "local_hard")]
    pub negatives: NegativesArg,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub taxonomy: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Corpus whose document vectors are exported as well.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ParamCountArgs {
    #[arg(long = "d-h")]
    pub d_h: usize,
    #[arg(long = "c")]
    pub c: usize,
    #[arg(long, default_value_t = 0)]
    pub vocab: usize,
    #[arg(long = "d-e", default_value_t = 0)]
    pub d_e: usize,
}

macro_rules! value_enum {
    ($name:ident => $target:ty { $($variant:ident => $to:expr),* $(,)? }) => {
        #[derive(Debug, Clone, Copy, ValueEnum)]
        #[value(rename_all = "snake_case")]
        pub enum $name { $($variant),* }

        impl From<$name> for $target {
            fn from(v: $name) -> Self {
                match v { $($name::$variant => $to),* }
            }
        }
    };
}

value_enum!(PlateauRuleArg => PlateauRule { Neither => PlateauRule::Neither, Either => PlateauRule::Either });
value_enum!(BceModeArg => BceMode {
    Standard => BceMode::Standard,
    LiteralPositiveOnly => BceMode::LiteralPositiveOnly,
});
value_enum!(LclSpaceArg => LclSpace { Logit => LclSpace::Logit, Sigmoid => LclSpace::Sigmoid });
value_enum!(ScheduleArg => ScheduleMode {
    FineToCoarse => ScheduleMode::FineToCoarse,
    CoarseToFine => ScheduleMode::CoarseToFine,
    AllAtOnce => ScheduleMode::AllAtOnce,
});
value_enum!(DrevArg => ReverseDepth { Height => ReverseDepth::Height, MinLeafDist => ReverseDepth::MinLeafDist });

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum NegativesArg {
    LocalHard,
    RandomK,
    SiblingsOnly,
    SubtreeOnly,
}
