//! `llens`: train small MNIST networks and inspect their signal spaces.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "llens",
    version,
    about = "Signal-space analysis of small MNIST networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a network from scratch and save a checkpoint plus per-epoch metrics.
    Train(TrainArgs),
    /// Render the signal vectors σᵢvᵢ of one dense layer and report its singular values.
    Analyze(AnalyzeArgs),
    /// Split each class-mean image into the part a one-layer network keeps and the residual it ignores.
    Residuals(ResidualsArgs),
    /// Signal space of a convolution layer's 3×3 kernels.
    ConvSignal(ConvSignalArgs),
    /// Invert a network with invertible activations back to an input image.
    Invert(InvertArgs),
    /// Learn the input image whose logits come closest to a class's ideal output.
    Ideal(IdealArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Arch {
    Fc1,
    Fc5,
    CnnSmall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Init {
    Avg,
    Min,
    AvgMin,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Directory holding the four MNIST IDX files.
    #[arg(long, env = "LLENS_DATA_DIR")]
    pub data: PathBuf,
    /// Use only the first N training images.
    #[arg(long, value_name = "N")]
    pub train_limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub arch: Arch,
    /// Defaults to 20 for the dense networks and 4 for cnn-small.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Defaults to 0.001 for the dense networks and 0.01 for cnn-small.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub data: DataArgs,
    /// Checkpoint path; metrics go next to it as `<out>.metrics.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Index of a dense layer within the network.
    #[arg(long, default_value_t = 0)]
    pub layer: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Normalize all signal images with one shared range so brightness follows σ.
    #[arg(long)]
    pub shared_norm: bool,
}

#[derive(Debug, Args)]
pub struct ResidualsArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConvSignalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Index of a convolution layer; defaults to the first one.
    #[arg(long)]
    pub layer: Option<usize>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Nine lines of nine reals: an alternative basis to express the signal vectors in.
    #[arg(long)]
    pub basis: Option<PathBuf>,
    #[arg(long)]
    pub shared_norm: bool,
}

#[derive(Debug, Args)]
pub struct InvertArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Comma-separated logits to invert.
    #[arg(
        long,
        allow_hyphen_values = true,
        required_unless_present = "from_image",
        conflicts_with = "from_image"
    )]
    pub logits: Option<String>,
    /// PGM image to forward through the network and invert back.
    #[arg(long)]
    pub from_image: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct IdealArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub class: usize,
    #[arg(long, value_enum, default_value_t = Init::Min)]
    pub init: Init,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    /// Fraction of lowest-loss training images averaged by `--init avg-min`.
    #[arg(long, default_value_t = 0.25)]
    pub percentile: f64,
    /// Keep pixels inside [0, 1] during descent.
    #[arg(long)]
    pub clamp: bool,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            // keep the diagnostic on one line: drop usage and tips, join the rest
            let text = e.to_string();
            let message: Vec<&str> = text
                .lines()
                .map(str::trim)
                .take_while(|l| !l.is_empty() && !l.starts_with("Usage:"))
                .collect();
            eprintln!("llens: {}", message.join(" ").trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Train(a) => commands::train(&a),
        Command::Analyze(a) => commands::analyze(&a),
        Command::Residuals(a) => commands::residuals(&a),
        Command::ConvSignal(a) => commands::conv_signal(&a),
        Command::Invert(a) => commands::invert(&a),
        Command::Ideal(a) => commands::ideal(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("llens: {}", e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
