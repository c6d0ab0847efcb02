use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tse_core::{EtaSchedule, FeatureFormat, ScoreMode, TrainConfig};

#[derive(Debug, Parser)]
#[command(
    name = "tse",
    version,
    about = "Triplet similarity embeddings for unit-norm feature vectors"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled Gaussian-cluster dataset on the unit sphere.
    Synth(SynthArgs),
    /// Fit the principal-component projection used to initialize training.
    Pca(PcaArgs),
    /// Learn a projection with the triplet similarity objective.
    TrainTse(TrainArgs),
    /// Learn a projection with the triplet distance objective.
    TrainTde(TrainArgs),
    /// Verification metrics (EER, TAR at fixed FAR) over pair protocols.
    EvalVerify(VerifyArgs),
    /// Closed-set identification accuracy at ranks 1 and 5.
    EvalIdentify(IdentifyArgs),
    /// Generate data, train both objectives and evaluate on held-out rows.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Binary,
    Csv,
}

impl From<FormatArg> for FeatureFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Binary => FeatureFormat::Binary,
            FormatArg::Csv => FeatureFormat::Csv,
        }
    }
}

impl FormatArg {
    pub fn name(self) -> &'static str {
        match self {
            FormatArg::Binary => "binary",
            FormatArg::Csv => "csv",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            FormatArg::Binary => "bin",
            FormatArg::Csv => "csv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Inner,
    Cosine,
    Both,
}

impl ModeArg {
    pub fn modes(self) -> Vec<ScoreMode> {
        match self {
            ModeArg::Inner => vec![ScoreMode::Inner],
            ModeArg::Cosine => vec![ScoreMode::Cosine],
            ModeArg::Both => vec![ScoreMode::Inner, ScoreMode::Cosine],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModeArg::Inner => "inner",
            ModeArg::Cosine => "cosine",
            ModeArg::Both => "both",
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 20)]
    pub classes: usize,
    #[arg(long, default_value_t = 50)]
    pub per_class: usize,
    #[arg(long, default_value_t = 512)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.4)]
    pub sigma: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Binary)]
    pub format: FormatArg,
}

#[derive(Debug, Args)]
pub struct Inputs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Binary)]
    pub format: FormatArg,
}

#[derive(Debug, Args)]
pub struct PcaArgs {
    #[arg(long)]
    pub features: PathBuf,
    /// Labels are not used by the fit; accepted for symmetry with training.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Binary)]
    pub format: FormatArg,
    #[arg(long, default_value_t = 128)]
    pub dout: usize,
    /// Output matrix file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct Hyper {
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.01)]
    pub eta: f64,
    #[arg(long, default_value_t = 128)]
    pub dout: usize,
    #[arg(long, default_value_t = 50_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 2000)]
    pub pool: usize,
    /// Multiply eta by this factor every `--eta-decay-every` iterations.
    #[arg(long, requires = "eta_decay_every")]
    pub eta_decay: Option<f64>,
    #[arg(long, requires = "eta_decay")]
    pub eta_decay_every: Option<usize>,
}

impl Hyper {
    pub fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            alpha: self.alpha,
            eta: self.eta,
            max_iter: self.iters,
            negative_pool: self.pool,
            d_out: self.dout,
            seed,
            schedule: match (self.eta_decay, self.eta_decay_every) {
                (Some(factor), Some(every)) => EtaSchedule::Step { factor, every },
                _ => EtaSchedule::Constant,
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[command(flatten)]
    pub hyper: Hyper,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output matrix file.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional CSV of windowed mean loss (`iteration,mean_loss`).
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[group(id = "embedding", required = true, multiple = false)]
pub struct Embedding {
    /// Projection matrix file.
    #[arg(long, group = "embedding")]
    pub matrix: Option<PathBuf>,
    /// Score raw features (identity projection).
    #[arg(long, group = "embedding")]
    pub raw: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub embedding: Embedding,
    #[command(flatten)]
    pub inputs: Inputs,
    /// Template map (`id:row,row,...`); defaults to one template per row, id = row.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Pair protocol (`id_a,id_b,0|1`).
    #[arg(long, conflicts_with = "splits", required_unless_present = "splits")]
    pub pairs: Option<PathBuf>,
    /// Several protocol files; metrics are reported as mean ± std.
    #[arg(long, num_args = 1..)]
    pub splits: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModeArg::Inner)]
    pub mode: ModeArg,
    /// ROC curve CSV (`far,tar`); with `--mode both` the mode is added to the name.
    #[arg(long, conflicts_with = "splits")]
    pub roc: Option<PathBuf>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    #[command(flatten)]
    pub embedding: Embedding,
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long)]
    pub gallery: PathBuf,
    #[arg(long)]
    pub probes: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Inner)]
    pub mode: ModeArg,
    #[arg(long, value_delimiter = ',', default_value = "1,5")]
    pub ranks: Vec<usize>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long, default_value_t = 20)]
    pub classes: usize,
    #[arg(long, default_value_t = 50)]
    pub per_class: usize,
    #[arg(long, default_value_t = 512)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.4)]
    pub sigma: f64,
    /// Seed for the synthetic data.
    #[arg(long, default_value_t = 7)]
    pub data_seed: u64,
    /// Seed for training.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Rows per class withheld from training for evaluation.
    #[arg(long, default_value_t = 10)]
    pub holdout: usize,
    #[command(flatten)]
    pub hyper: Hyper,
    #[arg(long, value_enum, default_value_t = ModeArg::Inner)]
    pub mode: ModeArg,
    /// Train only the similarity objective.
    #[arg(long)]
    pub skip_tde: bool,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
}
