mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use plottal::trainer::{AlignmentStrategy, TrainConfig};

use config::parse_thresholds;

/// A parsed `--thresholds` list.
#[derive(Clone, Debug)]
struct Thresholds(Vec<f64>);

fn thresholds_arg(s: &str) -> Result<Thresholds, String> {
    parse_thresholds(s).map(Thresholds)
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Core(#[from] plottal::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use plottal::Error as E;
        match self {
            Self::Usage(_) => 2,
            Self::Data(_) => 3,
            Self::Core(e) => match e {
                E::InvalidArgument(_) => 2,
                E::NonFinite(_) | E::KernelUnderflow { .. } | E::Degenerate { .. } => 4,
                _ => 3,
            },
        }
    }
}

#[derive(Parser)]
#[command(name = "plottal", version, about = "Few-shot temporal action localization with OT-aligned prompt ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus (manifest plus train/test JSONL splits).
    GenData(GenDataArgs),
    /// Fit a model on a few-shot subset of the training split.
    Train(TrainArgs),
    /// Score a trained model on a split and write mAP reports.
    Eval(EvalArgs),
    /// Train and evaluate over a grid of settings, writing one combined CSV.
    Ablate(AblateArgs),
    /// Write the normalized per-clip, per-prompt transport cost of one video.
    DumpPlan(DumpPlanArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// JSON run config; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    feature_dim: Option<usize>,
    #[arg(long)]
    clips: Option<usize>,
    #[arg(long)]
    train_videos: Option<usize>,
    #[arg(long)]
    test_videos: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    background_shift: Option<f64>,
    /// Give every class its own sub-events.
    #[arg(long)]
    no_sharing: bool,
}

/// Flags that map onto `TrainConfig`.
#[derive(Args, Clone, Default)]
struct TrainFlags {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// ot, hungarian, euclidean or mean.
    #[arg(long)]
    strategy: Option<AlignmentStrategy>,
    /// Prompts per class.
    #[arg(long)]
    prompts: Option<usize>,
    #[arg(long)]
    shots: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    n_ctx: Option<usize>,
    #[arg(long)]
    fpn_levels: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    lambda_reg: Option<f64>,
    /// Entropic regularization of the Sinkhorn solver.
    #[arg(long)]
    sinkhorn_lambda: Option<f64>,
}

impl TrainFlags {
    fn apply(&self, cfg: &mut TrainConfig) {
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag.clone() { cfg.$($field).+ = v; })*
            };
        }
        set!(
            epochs => epochs,
            seed => seed,
            strategy => alignment_strategy,
            prompts => num_prompts,
            shots => shots,
            lr => learning_rate,
            batch_size => batch_size,
            n_ctx => n_ctx,
            fpn_levels => fpn_levels,
            tau => tau,
            lambda_reg => lambda_reg,
            sinkhorn_lambda => sinkhorn.lambda,
        );
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus directory.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory for model.json, loss.csv and config.resolved.json.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Report directory; defaults to the model's directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated tIoU thresholds.
    #[arg(long, value_parser = thresholds_arg)]
    thresholds: Option<Thresholds>,
    /// Evaluate on the training split instead of the test split.
    #[arg(long)]
    on_train: bool,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory for ablation.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "ot")]
    strategies: Vec<AlignmentStrategy>,
    #[arg(long = "prompt-grid", value_delimiter = ',')]
    prompt_grid: Vec<usize>,
    #[arg(long = "n-ctx-grid", value_delimiter = ',')]
    n_ctx_grid: Vec<usize>,
    #[arg(long = "fpn-grid", value_delimiter = ',')]
    fpn_grid: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    /// Cells trained concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, value_parser = thresholds_arg)]
    thresholds: Option<Thresholds>,
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Args)]
struct DumpPlanArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    video: String,
    #[arg(long)]
    class: usize,
    /// CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::DumpPlan(a) => commands::dump_plan(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
