//! `bopkit`: keypoints, heatmaps, depth renders, synthetic scenes, and
//! dataset evaluation from one deterministic command-line tool.
//!
//! Every command resolves its configuration as flags over `--config` JSON
//! over built-in defaults, writes primary outputs atomically
//! (temp-then-rename), and records a manifest (resolved config, input
//! digests, wall time) next to its outputs. Exit codes: 2 for bad flags or
//! out-of-range values, 3 for missing or unparsable inputs, 4 for pipeline
//! precondition failures, 1 otherwise. `NO_COLOR` disables colored argument
//! errors; `--json-errors` prints failures as single-line JSON on stderr.

mod commands;
mod error;
mod inputs;
mod manifest;

use clap::{ColorChoice, Parser, Subcommand};
use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "bopkit",
    version,
    about = "6D object-pose dataset tooling: keypoints, heatmaps, depth, scene generation, evaluation",
    color = ColorChoice::Auto
)]
struct Cli {
    /// Cap internal parallelism at N threads.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Print failures as single-line JSON on stderr.
    #[arg(long, global = true)]
    json_errors: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract saliency keypoints from a mesh.
    Keypoints(commands::keypoints::KeypointsArgs),
    /// Render a keypoint set as a Gaussian heatmap PNG.
    Heatmap(commands::heatmap::HeatmapArgs),
    /// Render a mesh to a 16-bit depth PNG.
    Depth(commands::depth::DepthArgs),
    /// Score a results CSV against a dataset's ground truth.
    Eval(commands::eval::EvalArgs),
    /// Generate a synthetic BOP-layout dataset.
    Gen(commands::gen::GenArgs),
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs < 1 {
            return Err(CliError::Usage("--jobs must be at least 1".to_string()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Other(format!("cannot configure thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Keypoints(args) => commands::keypoints::run(args),
        Command::Heatmap(args) => commands::heatmap::run(args),
        Command::Depth(args) => commands::depth::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Gen(args) => commands::gen::run(args),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(&cli) {
        if cli.json_errors {
            let line = serde_json::json!({
                "error": e.message(),
                "kind": e.kind(),
                "exit_code": e.exit_code(),
            });
            eprintln!("{line}");
        } else {
            eprintln!("error: {e}");
        }
        std::process::exit(e.exit_code());
    }
}
