use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub const VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    " (formats: conllu 2, m2 1, pairs-jsonl 1, corruption-jsonl 1)"
);

#[derive(Debug, Parser)]
#[command(name = "sedkit", version = VERSION, about = "Corpus tooling and evaluation for detecting and correcting semantic errors in Chinese sentences")]
pub struct Cli {
    /// `key = value` file; command-line flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Worker threads for per-sentence work (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,

    /// Which end of an arc is called `child`: `standard` or `flip`.
    #[arg(long, global = true)]
    pub orientation: Option<String>,

    /// Skip malformed CoNLL-U records instead of failing.
    #[arg(long, global = true)]
    pub lenient: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a CoNLL-U file and optionally write it back normalised.
    Ingest(IngestArgs),
    /// Remove training sentences that near-duplicate evaluation sentences.
    Dedup(DedupArgs),
    /// Build pseudo-error pairs from parsed correct sentences.
    Corrupt(CorruptArgs),
    /// Generate DSP / DSP+ / DRP / DSRP pair examples.
    Sample(SampleArgs),
    /// Score system output.
    #[command(subcommand)]
    Score(ScoreCommand),
    /// Dataset statistics tables.
    Stats(StatsArgs),
    /// Train and evaluate a logistic-regression probe on sampled pairs.
    Probe(ProbeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    pub input: PathBuf,
    /// Write the parsed trees back out.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DedupArgs {
    /// Training sentences, one per line.
    #[arg(long)]
    pub train: PathBuf,
    /// Evaluation sentences, one per line; repeatable.
    #[arg(long, required = true)]
    pub against: Vec<PathBuf>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// `char` or `word`.
    #[arg(long)]
    pub unit: Option<String>,
    /// Cleaned training file (default `<train stem>.clean.txt`).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Hit report (default `<train stem>.leak.tsv`).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorruptArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    /// JSONL records (default: standard output).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// `corrupted<TAB>source` pairs for a trainer.
    #[arg(long)]
    pub tsv: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Weights for adv_att,conjunction,drop_spo, e.g. `1,1,1`.
    #[arg(long)]
    pub weights: Option<String>,
    #[arg(long)]
    pub rate: Option<f64>,
    /// Conjunction lexicon, one word per line.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    /// `dsp`, `dsp+`, `drp`, `dsrp` or `dsrp+`.
    #[arg(long)]
    pub task: String,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Relation labels for DRP, one per line.
    #[arg(long)]
    pub relations: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum ScoreCommand {
    /// MaxMatch precision/recall/F against M2 references.
    M2(ScoreM2Args),
    /// Sentence classification precision/recall/F1.
    Cls(ScoreClsArgs),
}

#[derive(Debug, Args)]
pub struct ScoreM2Args {
    /// Hypotheses, one tokenized sentence per line.
    #[arg(long)]
    pub hyp: PathBuf,
    #[arg(long)]
    pub m2: PathBuf,
    /// Sources, one per line (default: the M2 `S` lines).
    #[arg(long)]
    pub source: Option<PathBuf>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub max_unchanged: Option<usize>,
    /// `token` (whitespace) or `char`.
    #[arg(long)]
    pub granularity: Option<String>,
    /// Choose each sentence's reference on its own F instead of the running
    /// corpus F.
    #[arg(long)]
    pub per_sentence: bool,
    /// Full report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreClsArgs {
    /// `id<TAB>label` predictions.
    #[arg(long)]
    pub pred: PathBuf,
    /// `id<TAB>label` gold labels.
    #[arg(long)]
    pub gold: PathBuf,
    /// `id<TAB>type` error types of gold sentences.
    #[arg(long)]
    pub types: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// `label<TAB>sentence` files.
    #[arg(long, num_args = 1.., conflicts_with = "pairs", required_unless_present = "pairs")]
    pub labeled: Vec<PathBuf>,
    /// `source<TAB>target` files.
    #[arg(long, num_args = 1..)]
    pub pairs: Vec<PathBuf>,
    /// Unit for Avg.Edit: `char` or `token`.
    #[arg(long)]
    pub granularity: Option<String>,
    /// Also report Avg.Edit at both character and token level.
    #[arg(long, requires = "pairs")]
    pub detail: bool,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    /// Trees the examples were sampled from.
    #[arg(long)]
    pub trees: PathBuf,
    /// JSONL pair examples.
    #[arg(long)]
    pub examples: PathBuf,
    /// Trained models as JSON.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Accuracy TSV (default: standard output).
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub l2: Option<f64>,
    /// Share of sentences held out for evaluation.
    #[arg(long)]
    pub holdout: Option<f64>,
    /// Size of the POS-pair vocabulary.
    #[arg(long)]
    pub vocab_cap: Option<usize>,
}
