use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, CommandFactory, Parser, Subcommand};
use log::LevelFilter;
use prepsense::classify::BlockWeights;
use prepsense::config::parse_kv_config;
use prepsense::FeatureMode;

#[derive(Debug, Parser)]
#[command(
    name = "psd",
    version,
    about = "Preposition sense disambiguation from word-vector geometry",
    propagate_version = true
)]
pub struct Cli {
    /// key=value file supplying defaults for flags not given on the command line
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Seed for every random choice
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// Worker threads (defaults to the number of CPUs)
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[arg(long, global = true, default_value = "warn", value_name = "LEVEL")]
    pub log_level: LevelFilter,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert SemEval-style lexical-sample XML into an instance TSV
    ConvertSemeval(ConvertArgs),
    /// Compute feature triples for instances
    Features(FeaturesArgs),
    /// Unsupervised sense induction with k-means
    #[command(subcommand)]
    Cluster(ClusterCommand),
    /// Supervised weighted k-NN disambiguation
    #[command(subcommand)]
    Knn(KnnCommand),
    /// Sense-tag every modeled preposition in raw text
    Tag(TagArgs),
    /// Embedding training
    #[command(subcommand)]
    Embed(EmbedCommand),
    /// Evaluate sense-specific embeddings
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// Lexical-sample XML files
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
    pub xml: Vec<PathBuf>,
    /// Answer-key files (instance id to sense)
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    pub key: Vec<PathBuf>,
    /// Instance TSV to write
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub instances: PathBuf,
    /// Feature TSV to write
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub k_left: usize,
    #[arg(long, default_value_t = 2)]
    pub k_right: usize,
}

#[derive(Debug, Subcommand)]
pub enum ClusterCommand {
    /// Fit and label one k-means model per preposition
    Fit(ClusterFitArgs),
    /// Score k-means models against labeled instances
    Eval(ModelEvalArgs),
}

#[derive(Debug, Args)]
pub struct ClusterFitArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Labeled training instances
    #[arg(long)]
    pub instances: PathBuf,
    /// Directory receiving one model file per preposition
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "all")]
    pub features: FeatureMode,
    /// Clusters per preposition (defaults to its number of training senses)
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 300)]
    pub max_iter: usize,
    /// Only these prepositions
    #[arg(long, value_delimiter = ',')]
    pub prep: Vec<String>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelEvalArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Labeled test instances
    #[arg(long)]
    pub instances: PathBuf,
    /// Model directory
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub prep: Vec<String>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum KnnCommand {
    /// Grid-search k-NN hyperparameters per preposition and save the models
    Tune(KnnTuneArgs),
    /// Score k-NN models against labeled instances
    Eval(ModelEvalArgs),
}

#[derive(Debug, Args)]
pub struct KnnTuneArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Labeled training instances
    #[arg(long)]
    pub instances: PathBuf,
    /// Labeled development instances (otherwise split from --instances)
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Training share when splitting off a development set
    #[arg(long, default_value_t = 0.8)]
    pub train_ratio: f64,
    /// Directory receiving one model file per preposition
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "all")]
    pub features: FeatureMode,
    /// Neighbor counts to try
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<usize>,
    /// Left window sizes to try
    #[arg(long, value_delimiter = ',')]
    pub k_left: Vec<usize>,
    /// Right window sizes to try
    #[arg(long, value_delimiter = ',')]
    pub k_right: Vec<usize>,
    /// Block weights "left,right,inter" to try, separated by ';' or repeated
    #[arg(long = "weights", value_name = "L,R,I", value_delimiter = ';')]
    pub weights: Vec<BlockWeights>,
    #[arg(long, value_delimiter = ',')]
    pub prep: Vec<String>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TagArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    /// k-NN model directory
    #[arg(long)]
    pub model: PathBuf,
    /// Raw text to tag
    #[arg(long)]
    pub corpus: PathBuf,
    /// Tagged corpus to write, one sentence per line
    #[arg(long)]
    pub out: PathBuf,
    /// Only tag these prepositions
    #[arg(long, value_delimiter = ',')]
    pub prep: Vec<String>,
    #[arg(long, default_value_t = 10_000)]
    pub batch_lines: usize,
}

#[derive(Debug, Subcommand)]
pub enum EmbedCommand {
    /// Train CBOW vectors on a (tagged) tokenized corpus
    Train(EmbedTrainArgs),
}

#[derive(Debug, Args)]
pub struct EmbedTrainArgs {
    /// Tokenized corpus, one sentence per line
    #[arg(long)]
    pub corpus: PathBuf,
    /// Word-vector file to write
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 300)]
    pub dim: usize,
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    /// Context window around sense-tagged tokens
    #[arg(long, default_value_t = 2)]
    pub prep_window: usize,
    #[arg(long, default_value_t = 5)]
    pub negatives: usize,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.025)]
    pub lr: f64,
    #[arg(long, default_value_t = 5)]
    pub min_count: u64,
    /// Frequent-word subsampling threshold (0 disables)
    #[arg(long, default_value_t = 1e-3)]
    pub subsample: f64,
    #[arg(long)]
    pub dynamic_window: bool,
    /// Lock-free multi-threaded training; results are not reproducible
    #[arg(long)]
    pub parallel: bool,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Relation approximation by vector addition
    Analogy(AnalogyArgs),
    /// Phrasal-verb paraphrasing
    Vpc(VpcArgs),
}

#[derive(Debug, Args)]
pub struct AnalogyArgs {
    /// Global embedding table
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Sense-specific embedding table
    #[arg(long)]
    pub senses: Option<PathBuf>,
    /// Relation pairs file
    #[arg(long)]
    pub pairs: PathBuf,
    /// Preposition token per relation: "relation=token" items, or one token for all
    #[arg(long, value_delimiter = ',', required = true)]
    pub prep: Vec<String>,
    #[arg(long, default_value_t = 3)]
    pub topk: usize,
    /// Score each pair with the mean difference of the other pairs
    #[arg(long)]
    pub holdout: bool,
    /// Report TSV to write
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VpcArgs {
    /// Global embedding table, also used to classify example sentences
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Sense-specific embedding table
    #[arg(long)]
    pub senses: PathBuf,
    /// k-NN model directory used to pick each particle's sense
    #[arg(long)]
    pub model: PathBuf,
    /// VPC dataset TSV
    #[arg(long)]
    pub vpc: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub topk: usize,
    /// Report TSV to write
    #[arg(long)]
    pub out: PathBuf,
}

fn flag_value(argv: &[OsString], name: &str) -> Option<OsString> {
    let long = format!("--{name}");
    let prefix = format!("--{name}=");
    let mut iter = argv.iter();
    while let Some(a) = iter.next() {
        let s = a.to_string_lossy();
        if s == long {
            return iter.next().cloned();
        }
        if let Some(v) = s.strip_prefix(&prefix) {
            return Some(v.into());
        }
    }
    None
}

fn has_flag(argv: &[OsString], name: &str) -> bool {
    let long = format!("--{name}");
    let prefix = format!("--{name}=");
    argv.iter().any(|a| {
        let s = a.to_string_lossy();
        s == long || s.starts_with(&prefix)
    })
}

/// Appends flags from the `--config` file that the command line does not set.
/// Keys that the selected subcommand does not accept are ignored with a
/// warning, so one file can serve several stages.
pub fn merge_config(mut argv: Vec<OsString>) -> anyhow::Result<Vec<OsString>> {
    let Some(path) = flag_value(&argv, "config") else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {}", path.to_string_lossy()))?;
    let entries = parse_kv_config(&text).with_context(|| format!("in config {}", path.to_string_lossy()))?;

    let root = Cli::command();
    let partial = Cli::command().ignore_errors(true).try_get_matches_from(&argv);
    let mut leaf = &root;
    if let Ok(mut m) = partial {
        while let Some((name, sub)) = m.subcommand() {
            match leaf.find_subcommand(name) {
                Some(c) => leaf = c,
                None => break,
            }
            m = sub.clone();
        }
    }

    for (key, value) in entries {
        if key == "config" {
            bail!("config files cannot include other config files");
        }
        if has_flag(&argv, &key) {
            continue;
        }
        let arg = leaf
            .get_arguments()
            .chain(root.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()));
        let Some(arg) = arg else {
            eprintln!("warning: config key {key:?} does not apply to this command");
            continue;
        };
        if arg.get_action().takes_values() {
            argv.push(format!("--{key}").into());
            argv.push(value.into());
        } else {
            match value.as_str() {
                "true" | "1" | "yes" => argv.push(format!("--{key}").into()),
                "false" | "0" | "no" => {}
                other => bail!("config key {key:?} expects true or false, got {other:?}"),
            }
        }
    }
    Ok(argv)
}
