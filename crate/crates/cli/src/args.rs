use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "fetqc", about = "Quality assessment of fetal brain MR stacks")]
pub struct Cli {
    /// File of `key = value` lines mirroring long flags; flags given on the
    /// command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render one HTML QA report per stack plus a group index.
    Report(ReportArgs),
    /// Compute the IQM table of a dataset.
    Extract(ExtractArgs),
    /// Rating documents.
    #[command(subcommand)]
    Rate(RateCommand),
    /// Select a model by nested grouped CV and fit it on all rows.
    Train(TrainArgs),
    /// Score stacks with a trained model.
    Predict(PredictArgs),
    /// Nested CV, cross-site or training-size evaluation.
    Evaluate(EvaluateArgs),
    /// Write a synthetic phantom dataset with ratings.
    Synth(SynthArgs),
}

#[derive(Debug, Subcommand)]
pub enum RateCommand {
    /// Merge a folder of rating JSON files into a ratings table.
    Merge(MergeArgs),
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// BIDS root holding the stacks.
    #[arg(long)]
    pub bids: PathBuf,
    /// Root of the mask derivatives.
    #[arg(long)]
    pub masks: PathBuf,
    /// Mask file name relative to the stack's folder; `{stem}` is the stack
    /// name without its `_T2w.nii[.gz]` suffix.
    #[arg(long, default_value = fetqc::io::bids::DEFAULT_MASK_PATTERN)]
    pub mask_pattern: String,
    /// Worker threads; outputs do not depend on it.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Predictions TSV shown in the group report.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Ratings TSV shown in the group report.
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    /// Timestamp written into the reports; defaults to the current time.
    #[arg(long)]
    pub timestamp: Option<String>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Feature catalog JSON; defaults to the built-in catalog.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Regression,
    Classification,
}

impl From<TaskArg> for fetqc::models::Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Regression => fetqc::models::Task::Regression,
            TaskArg::Classification => fetqc::models::Task::Classification,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FeatureSet {
    /// Every column of the IQM table.
    Full,
    /// The reference subset of mask-shape and rank features.
    Base,
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    #[arg(long)]
    pub iqms: PathBuf,
    #[arg(long)]
    pub ratings: PathBuf,
    #[arg(long, value_enum)]
    pub task: TaskArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON list of grid points; defaults to the full grid for the task.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FeatureSet::Full)]
    pub features: FeatureSet,
    #[arg(long, default_value_t = 5)]
    pub k_outer: usize,
    #[arg(long, default_value_t = 5)]
    pub k_inner: usize,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub learn: LearnArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the CV report JSON here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Skip the nested CV estimate and only fit the final model.
    #[arg(long)]
    pub no_cv: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub iqms: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub learn: LearnArgs,
    /// Metadata column (in the ratings or IQM table) naming two sites.
    #[arg(long, value_name = "COLUMN")]
    pub cross_site: Option<String>,
    /// Comma-separated training fractions for a training-size sweep.
    #[arg(long, value_delimiter = ',', conflicts_with = "cross_site")]
    pub train_fractions: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 60)]
    pub subjects: usize,
    #[arg(long, default_value_t = 5)]
    pub stacks: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}
