use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(name = "forge", version, about = "Vector-quantized embeddings for mixed-integer programs")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Serialize)]
pub struct GlobalOpts {
    /// Master seed; every random stream is derived from it by name.
    #[arg(long, global = true, env = "FORGE_SEED", default_value_t = 0)]
    pub seed: u64,
    /// `key = value` file of flag defaults. Flags on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads for parallel-safe stages (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Single-threaded execution.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a corpus of MPS instances with a manifest.
    Gen(GenArgs),
    /// Pre-train the autoencoder on a corpus.
    Pretrain(PretrainArgs),
    /// Write instance embeddings for a corpus.
    Embed(EmbedArgs),
    /// k-means over instance embeddings, scored against family/size.
    Cluster(ClusterArgs),
    /// Shift one family's embeddings by the difference of two others.
    Arith(ArithArgs),
    /// Label gaps with the built-in solver and fine-tune a gap head.
    FinetuneGap(FinetuneGapArgs),
    /// Add a predicted objective cut to instances.
    Cut(CutArgs),
    /// Fine-tune a variable-guidance head from solution pools.
    FinetuneGuide(FinetuneGuideArgs),
    /// Emit include/exclude hints for one instance.
    Hints(HintsArgs),
    /// Summarize a checkpoint and its codebook usage.
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gen(_) => "gen",
            Command::Pretrain(_) => "pretrain",
            Command::Embed(_) => "embed",
            Command::Cluster(_) => "cluster",
            Command::Arith(_) => "arith",
            Command::FinetuneGap(_) => "finetune-gap",
            Command::Cut(_) => "cut",
            Command::FinetuneGuide(_) => "finetune-guide",
            Command::Hints(_) => "hints",
            Command::Report(_) => "report",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    /// Comma-separated families: sc, vc, is, bp, ca (or full names).
    #[arg(long, value_delimiter = ',', default_value = "sc,vc,is")]
    pub families: Vec<String>,
    /// Comma-separated sizes: easy, medium, hard.
    #[arg(long, value_delimiter = ',', default_value = "easy,medium")]
    pub sizes: Vec<String>,
    /// Instances per family and size.
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregatorArg {
    Mean,
    Normalized,
}

#[derive(Debug, Args, Serialize)]
pub struct PretrainArgs {
    /// Corpus directory (or its manifest.csv).
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = Profile::Desk)]
    pub profile: Profile,
    /// Embedding width.
    #[arg(long)]
    pub d: Option<usize>,
    /// Codebook size.
    #[arg(long)]
    pub k: Option<usize>,
    /// Edge-decoder width (defaults to d).
    #[arg(long)]
    pub edge_dim: Option<usize>,
    /// Commitment weight.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, value_enum)]
    pub aggregator: Option<AggregatorArg>,
    /// Sampled non-edges per edge.
    #[arg(long)]
    pub neg_ratio: Option<f64>,
    /// Constraint-drop fractions for augmentation.
    #[arg(long, value_delimiter = ',')]
    pub fractions: Option<Vec<f64>>,
    /// Keep dead codes instead of reseeding them between epochs.
    #[arg(long)]
    pub no_reseed: bool,
    /// Checkpoint path; the loss CSV goes next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedKind {
    /// Code histogram.
    Hist,
    /// Mean of encoder outputs.
    Mean,
    /// Two-hop label propagation of input features.
    Lp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StoreFormat {
    Csv,
    Bin,
}

#[derive(Debug, Args, Serialize)]
pub struct EmbedArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, value_enum, default_value_t = EmbedKind::Hist)]
    pub kind: EmbedKind,
    /// Raw code counts instead of frequencies.
    #[arg(long)]
    pub raw: bool,
    #[arg(long, value_enum, default_value_t = StoreFormat::Csv)]
    pub format: StoreFormat,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ClusterArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, value_enum, default_value_t = EmbedKind::Hist)]
    pub kind: EmbedKind,
    #[arg(long, default_value_t = 6)]
    pub k_clusters: usize,
    /// k-means restarts; NMI is averaged over them.
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    /// Cluster assignments CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional 2-D PCA projection CSV.
    #[arg(long)]
    pub projection: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ArithArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Family whose embeddings are shifted.
    #[arg(long, default_value = "vc")]
    pub minuend: String,
    #[arg(long, default_value = "sc")]
    pub subtrahend: String,
    #[arg(long, default_value = "bp")]
    pub addend: String,
    /// Family whose centroid distances are measured.
    #[arg(long, default_value = "is")]
    pub target: String,
    /// Per-instance distances CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct FinetuneGapArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Branch-and-bound node limit for labeling.
    #[arg(long, default_value_t = 200)]
    pub node_limit: usize,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    /// Start from a random model instead of the checkpoint.
    #[arg(long)]
    pub scratch: bool,
    /// Fraction of instances held out for evaluation.
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CutArgs {
    /// Checkpoint with a gap head.
    #[arg(long)]
    pub ckpt: PathBuf,
    /// An MPS file or a corpus directory.
    #[arg(long)]
    pub input: PathBuf,
    /// 0 keeps the LP bound, 1 trusts the prediction fully.
    #[arg(long, default_value_t = 0.9)]
    pub shrink: f64,
    /// Output MPS file, or directory for a corpus.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct FinetuneGuideArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Unsupervised checkpoint; also the space where negatives are mined.
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub pool: usize,
    #[arg(long, default_value_t = 100_000)]
    pub node_limit: usize,
    #[arg(long, default_value_t = 25)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    #[arg(long)]
    pub scratch: bool,
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct HintsArgs {
    /// Checkpoint with a guidance head.
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub mps: PathBuf,
    /// Solution file (`name value` lines). Solved here when absent.
    #[arg(long)]
    pub anchor: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    pub radius: f64,
    #[arg(long, default_value_t = 0.1)]
    pub decile: f64,
    #[arg(long, default_value_t = 100_000)]
    pub node_limit: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Corpus for the codebook usage table.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Codebook usage CSV (needs --corpus).
    #[arg(long)]
    pub out: Option<PathBuf>,
}
