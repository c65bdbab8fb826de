use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mokd::adapt::LossKind;
use mokd::eval::HeatmapFormat;
use mokd::KernelFamily;

mod commands;
mod config;

/// Kernel dependence toolkit: synthetic embedding pools, HSIC bandwidth
/// tables and episodic few-shot evaluation.
#[derive(Debug, Parser)]
#[command(name = "mokd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic class-clustered embedding pool.
    Synth(SynthArgs),
    /// Print the bandwidth table of HSIC estimates and power ratios.
    Hsic(HsicArgs),
    /// Run adaptation episodes and report query accuracy.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 50)]
    pub per_class: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    /// Norm of every class mean.
    #[arg(long, default_value_t = 6.0)]
    pub separation: f64,
    /// Standard deviation of the isotropic noise.
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output path; a `.csv` extension writes the CSV form instead of EMB1.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LabelSource {
    /// Class labels stored in the embeddings file.
    File,
    /// The embeddings themselves, giving HSIC(Z, Z).
    Embedded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Table,
    Csv,
}

#[derive(Debug, Args)]
pub struct HsicArgs {
    /// EMB1 file, or CSV when the extension is `.csv`.
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long, value_enum, default_value_t = LabelSource::File)]
    pub labels_from: LabelSource,
    #[arg(long, default_value_t = KernelFamily::Gaussian)]
    pub kernel: KernelFamily,
    /// Evaluate a single coefficient instead of the grid.
    #[arg(long, conflicts_with = "grid")]
    pub coeff: Option<f64>,
    /// Comma-separated coefficients replacing the default grid.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long, default_value_t = mokd::hsic::DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long, value_enum, default_value_t = TableFormat::Table)]
    pub format: TableFormat,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// EMB1 file, or CSV when the extension is `.csv`.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// key = value settings file; flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of episodes [default: 100].
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Base seed; episode i uses stream (seed, i) [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// mokd or ncc [default: mokd].
    #[arg(long)]
    pub loss: Option<LossKind>,
    /// Weight of the HSIC(Z, Z) term [default: 3].
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Adadelta learning rate [default: 0.25].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Head updates per episode [default: 40].
    #[arg(long)]
    pub steps: Option<usize>,
    /// Decoupled weight decay [default: 0].
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// gaussian, imq or cosine [default: gaussian].
    #[arg(long)]
    pub kernel: Option<KernelFamily>,
    /// Reuse the HSIC(Z, Y) coefficient for HSIC(Z, Z).
    #[arg(long)]
    pub share_zz: Option<bool>,
    /// Power-ratio stabilizer [default: 1e-5].
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Adapt on raw rather than L2-normalized features.
    #[arg(long)]
    pub no_normalize: bool,
    /// Upper bound on classes per vary-way task [default: 50].
    #[arg(long)]
    pub n_max: Option<usize>,
    /// Fixed episodes: classes per task (needs --shots and --queries).
    #[arg(long)]
    pub ways: Option<usize>,
    /// Fixed episodes: support rows per class.
    #[arg(long)]
    pub shots: Option<usize>,
    /// Fixed episodes: query rows per class.
    #[arg(long)]
    pub queries: Option<usize>,
    /// Directory for per-episode similarity matrices.
    #[arg(long)]
    pub dump_heatmaps: Option<PathBuf>,
    /// csv (with class boundaries) or pgm.
    #[arg(long, default_value_t = HeatmapFormat::Csv)]
    pub heatmap_format: HeatmapFormat,
    /// Worker threads (default: all logical cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Log one line per finished episode to stderr.
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or invalid values: exit code 2.
    Usage(String),
    /// Reading or writing files failed: exit code 1.
    Io(String),
}

impl CliError {
    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Io(m) => m,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 1,
        }
    }
}

impl From<mokd::Error> for CliError {
    fn from(e: mokd::Error) -> Self {
        match e {
            mokd::Error::Io(_) | mokd::Error::Format(_) => CliError::Io(e.to_string()),
            mokd::Error::Episode { ref source, .. } if matches!(**source, mokd::Error::Io(_)) => {
                CliError::Io(e.to_string())
            }
            other => CliError::Usage(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let result = match cli.command {
        Command::Synth(args) => commands::synth(&args, &mut out),
        Command::Hsic(args) => commands::hsic(&args, &mut out),
        Command::Eval(args) => commands::eval(&args, &mut out),
    };
    let _ = out.flush();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
