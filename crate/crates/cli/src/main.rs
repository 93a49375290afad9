use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod overrides;

/// Multi-domain super-resolution toolkit.
#[derive(Debug, Parser)]
#[command(name = "multisr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write bicubic, bilinear and nearest LR copies of an HR folder.
    Synth(SynthArgs),
    /// Train (or resume) a model. Config keys can be overridden with
    /// `--section.key value`, e.g. `--loss.l1 5` or `--iterations 20`.
    Train(TrainArgs),
    /// Super-resolve a folder of LR images of unknown degradation.
    Infer(InferArgs),
    /// Score a checkpoint per LR domain against HR ground truth.
    Eval(EvalArgs),
    /// Write an input / output / target image grid for a checkpoint.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Folder of HR PNG images.
    #[arg(long)]
    pub hr: PathBuf,
    /// Output folder; one subfolder per LR domain.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub scale: usize,
    /// Std of additive Gaussian noise in [0, 1] units.
    #[arg(long, default_value_t = 0.0)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write 16-bit PNGs instead of 8-bit.
    #[arg(long)]
    pub sixteen_bit: bool,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Corpus root (HR images directly or under `hr/`); repeatable.
    #[arg(long = "data")]
    pub data: Vec<PathBuf>,
    /// Saved corpus manifest, instead of scanning `--data`.
    #[arg(long, conflicts_with = "data")]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// TOML config; missing keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Continue from a checkpoint. Without `--config` its stored
    /// configuration is used.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Ablation mode: v1, v2 or v3.
    #[arg(long)]
    pub mode: Option<String>,
    /// Patch 64, batch 4, 500 iterations.
    #[arg(long)]
    pub desk_scale: bool,
    /// Run directory. Defaults to `$MULTISR_RUN_ROOT/<name>`, or
    /// `runs/<name>` when the variable is unset.
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    /// Run name used when `--run-dir` is absent.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated LR domains (bicubic, bilinear, nearest, real).
    #[arg(long, value_delimiter = ',')]
    pub domains: Option<Vec<String>>,
    /// Output folder; defaults to the checkpoint's run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Images per domain in the report grid; 0 writes no grid.
    #[arg(long, default_value_t = 0)]
    pub panels: usize,
    /// LPIPS backbone: `fixed_random`, `none` or a saved feature stack.
    #[arg(long, default_value = "fixed_random")]
    pub lpips_backbone: String,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_delimiter = ',')]
    pub domains: Option<Vec<String>>,
    /// Images per domain.
    #[arg(long, default_value_t = 2)]
    pub count: usize,
    /// Output PNG.
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let argv: Vec<String> = std::env::args().collect();
    // Overrides only make sense for `train`; other commands see raw args.
    let (argv, ov) = match argv.get(1).map(String::as_str) {
        Some("train") => match overrides::extract(argv.clone(), 2) {
            Ok(x) => x,
            Err(e) => {
                eprintln!("error: {e:#}");
                return ExitCode::from(commands::EXIT_USAGE);
            }
        },
        _ => (argv, Vec::new()),
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(commands::EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Train(a) => commands::train(&a, &ov),
        Command::Infer(a) => commands::infer(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Report(a) => commands::report(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
