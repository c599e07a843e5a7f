use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use neurcam::Ablation;

#[derive(Debug, Parser)]
#[command(name = "neurcam", version, about = "Interpretable fuzzy clustering with gated neural additive models")]
pub struct Cli {
    /// Only print warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model (best of several seeds) and save it.
    Fit(Box<FitArgs>),
    /// Assign clusters to new rows.
    Predict(PredictArgs),
    /// Export shape graphs and feature importance of a trained model.
    Explain(ExplainArgs),
    /// Score a model against ground-truth labels.
    Eval(EvalArgs),
    /// Mini-batch k-means reference clustering.
    BaselineKmeans(BaselineArgs),
    /// Write isotropic Gaussian blobs (features and labels) for trying things out.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// CSV of interpretable features.
    #[arg(long)]
    pub x: PathBuf,
    /// CSV files have no header row.
    #[arg(long)]
    pub no_header: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// CSV of the representation used for distances; defaults to --x.
    #[arg(long)]
    pub xt: Option<PathBuf>,
    /// Where to write the trained model.
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write the per-seed training report; defaults to the model
    /// path with a `.report.json` suffix.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// TOML file of training settings. Flags given here take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of clusters.
    #[arg(long)]
    pub k: Option<usize>,
    /// Single-feature shape functions.
    #[arg(long)]
    pub gates: Option<usize>,
    /// Pairwise shape functions.
    #[arg(long)]
    pub pair_gates: Option<usize>,
    #[arg(long)]
    pub m: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Comma-separated training seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Total training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Tempering epochs per gate bank.
    #[arg(long)]
    pub temper: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub basis: Option<usize>,
    /// full, no_cl or no_kl.
    #[arg(long, value_parser = parse_ablation)]
    pub ablation: Option<Ablation>,
    /// Use the interpretable features as given instead of standardizing them.
    #[arg(long)]
    pub no_standardize: bool,
    /// Also standardize the representation given by --xt.
    #[arg(long)]
    pub standardize_xt: bool,
    /// Save an in-progress model every this many epochs (0 disables).
    #[arg(long, default_value_t = 100)]
    pub checkpoint_every: usize,
}

fn parse_ablation(s: &str) -> Result<Ablation, String> {
    s.parse().map_err(|e: neurcam::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub input: InputArgs,
    /// Write the K fuzzy weights per row instead of the hard label.
    #[arg(long)]
    pub soft: bool,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Training data; sets curve ranges, bins and densities.
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Points per curve.
    #[arg(long, default_value_t = neurcam::explain::DEFAULT_GRID_POINTS)]
    pub grid_points: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub input: InputArgs,
    /// Representation for inertia; defaults to --x.
    #[arg(long)]
    pub xt: Option<PathBuf>,
    /// One integer label per line.
    #[arg(long)]
    pub labels: PathBuf,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    /// CSV of the representation to cluster.
    #[arg(long)]
    pub xt: PathBuf,
    #[arg(long)]
    pub no_header: bool,
    #[arg(long)]
    pub k: usize,
    /// One integer label per line; adds ari, nmi and acc to the output.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 512)]
    pub batch_size: usize,
    /// Standardize the columns before clustering.
    #[arg(long)]
    pub standardize: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 4)]
    pub d: usize,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Smallest distance between blob centers, in standard deviations.
    #[arg(long, default_value_t = 6.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Features CSV (with header).
    #[arg(long)]
    pub out: PathBuf,
    /// Labels file, one per line.
    #[arg(long)]
    pub labels_out: PathBuf,
}
