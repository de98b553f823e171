//! `tspgnn` command-line tool.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "tspgnn", version, about = "Decision-TSP graph neural network: data, training, evaluation")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// TOML run configuration; flags given here take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for all outputs of the command.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Evaluation worker threads (1 is bitwise reproducible).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a dataset of graphs with optimal tour costs.
    Generate(commands::GenerateArgs),
    /// Train a model on a dataset.
    Train(commands::TrainArgs),
    /// Accuracy tables: plain, per size, or per distribution.
    Eval(commands::EvalArgs),
    /// Acceptance curves (mean prediction against deviation).
    Curve(commands::CurveArgs),
    /// Extract tour costs by binary search over the target.
    Cost(commands::CostArgs),
    /// Nearest-neighbor and annealing baselines against the model.
    Baseline(commands::BaselineArgs),
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config: exit code 1.
    Usage(String),
    /// Bad or missing data, or a solver limit: exit code 2.
    Data(String),
    /// A broken internal invariant: exit code 3.
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<tspgnn::Error> for CliError {
    fn from(e: tspgnn::Error) -> Self {
        use tspgnn::Error as E;
        match e {
            E::InvalidArgument(_) | E::Unsupported(_) => CliError::Usage(e.to_string()),
            E::InvalidInstance(_)
            | E::Capacity { .. }
            | E::MissingOptimum
            | E::Parse { .. }
            | E::Checkpoint(_)
            | E::Io { .. } => CliError::Data(e.to_string()),
            E::Shape { .. } | E::TapeConsumed | E::UnknownParameter(_) => CliError::Internal(e.to_string()),
        }
    }
}

/// Keeps freed memory in the allocator instead of returning it to the
/// kernel. A training step allocates and frees hundreds of megabytes of
/// tape buffers, and faulting those pages back in costs more than the math.
fn retain_freed_memory() {
    #[cfg(all(target_os = "linux", target_env = "gnu"))]
    // SAFETY: mallopt only adjusts allocator tunables; called before any threads start.
    unsafe {
        libc::mallopt(libc::M_MMAP_THRESHOLD, 32 << 20);
        libc::mallopt(libc::M_TRIM_THRESHOLD, i32::MAX);
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = cli.common.output_dir {
        config.output_dir = Some(dir);
    }
    if let Some(t) = cli.common.threads {
        config.threads = Some(t);
    }
    let threads = *config.threads.get_or_insert(1);
    if threads == 0 {
        return Err(CliError::Usage("--threads must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    match cli.command {
        Command::Generate(a) => commands::generate(config, a),
        Command::Train(a) => commands::train(config, a),
        Command::Eval(a) => commands::eval(config, a),
        Command::Curve(a) => commands::curve(config, a),
        Command::Cost(a) => commands::cost(config, a),
        Command::Baseline(a) => commands::baseline(config, a),
    }
}

fn main() -> ExitCode {
    retain_freed_memory();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tspgnn: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
