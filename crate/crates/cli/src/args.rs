use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "movrptw", version, about = "Weight-aware routing policies and NSGA-II search for the multiobjective VRPTW")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Seed overriding the one in the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Run on one thread and write zero timings so outputs are byte-identical across runs.
    #[arg(long, global = true)]
    pub reproducible: bool,

    /// More log output (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate random instances.
    Gen(GenArgs),
    /// Train a policy.
    Train(TrainArgs),
    /// Decode an instance under a grid of weight vectors.
    Sweep(SweepArgs),
    /// Run NSGA-II from a random or policy-seeded population.
    Evolve(EvolveArgs),
    /// Sweep, seed and evolve in one go.
    Pipeline(PipelineArgs),
    /// Seeded against random initialisation over several generation budgets.
    Compare(CompareArgs),
    /// Check the feasibility of every solution in a front file.
    Eval(EvalArgs),
    /// Compare policy gradients with finite differences.
    GradCheck(GradCheckArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InstanceArgs {
    /// Solomon text file or instance JSON; relative names are also looked up under $MOVRPTW_DATA_DIR.
    #[arg(long)]
    pub instance: PathBuf,

    /// Keep only the first N customers of a Solomon file.
    #[arg(long)]
    pub truncate: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Generator config (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub customers: Option<usize>,
    /// Number of instances; with more than one, `--out` names a directory.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training config (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for checkpoints and the training log.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub batches_per_epoch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub customers: Option<usize>,
    /// `random` for Dirichlet weights or a fixed pair such as `0.3,0.7`.
    #[arg(long)]
    pub weights: Option<String>,
    #[arg(long)]
    pub eval_size: Option<usize>,
    /// Continue from the checkpoint in `--out-dir`.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Step of the weight grid.
    #[arg(long, default_value_t = 0.02)]
    pub interval: f64,
    /// Front file (CSV, or JSON by extension).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Wadrl,
    Random,
}

#[derive(Debug, Clone, Args)]
pub struct EvolutionArgs {
    /// Evolution config (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub generations: Option<usize>,
    #[arg(long)]
    pub population: Option<usize>,
    /// Step of the weight grid used for seeding.
    #[arg(long, default_value_t = 0.02)]
    pub interval: f64,
}

#[derive(Debug, Args)]
pub struct EvolveArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[command(flatten)]
    pub evolution: EvolutionArgs,
    #[arg(long, value_enum)]
    pub init: Option<InitArg>,
    /// Policy checkpoint, required for `--init wadrl`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Final front file.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-generation metrics (JSON lines).
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[command(flatten)]
    pub evolution: EvolutionArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Receives seed_front.csv, final_front.csv and metrics.jsonl.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[command(flatten)]
    pub evolution: EvolutionArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Generation budgets.
    #[arg(long, value_delimiter = ',', default_values_t = [200, 500])]
    pub budgets: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    /// Front file whose routes are checked.
    #[arg(long)]
    pub solution: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    #[arg(long, default_value_t = 5)]
    pub customers: usize,
    #[arg(long, default_value_t = 100)]
    pub params: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub tolerance: f64,
}
