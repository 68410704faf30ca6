//! `mep`: energy masks, adversarial attacks, evaluation tables and self-checks
//! from the command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use mep_core::attacks::{AttackMethod, MepMode};

use crate::config::ConfigFile;

#[derive(Parser, Debug)]
#[command(name = "mep", version, about = "Masked energy perturbation attacks on a toy speaker encoder")]
struct Cli {
    /// key = value file; command-line flags override its entries
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads for per-utterance work (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute the small-energy mask of a wav file
    Mask(MaskArgs),
    /// Attack one wav file and write the adversarial audio
    Attack(AttackArgs),
    /// Attack every test utterance of a corpus and tabulate SNR, LSD and EER
    Evaluate(EvaluateArgs),
    /// Run the built-in gradient, STFT and mask checks
    Selfcheck(SelfcheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(format!("expected json or csv, got `{s}`")),
        }
    }
}

#[derive(Args, Debug)]
pub struct OutputArgs {
    /// Directory for output files (created if missing) [default: .]
    #[arg(long)]
    out_dir: Option<PathBuf>,

    /// json or csv [default: json]
    #[arg(long)]
    format: Option<Format>,
}

#[derive(Args, Debug)]
pub struct MaskOpts {
    /// Mask threshold in dB relative to the peak [default: -20]
    #[arg(long, allow_negative_numbers = true)]
    eta_th: Option<f64>,
}

#[derive(Args, Debug)]
pub struct HyperArgs {
    /// ℓ∞ budget on the power-domain perturbation [default: 0.0002]
    #[arg(long)]
    epsilon: Option<f64>,

    /// Iterations for the iterative methods [default: 20]
    #[arg(long)]
    iterations: Option<usize>,

    /// Step size [default: epsilon / iterations]
    #[arg(long)]
    alpha: Option<f64>,

    /// gradient-mask or feature-product [default: gradient-mask]
    #[arg(long)]
    mep_mode: Option<MepMode>,

    /// Seed for random starts and random targets [default: 0]
    #[arg(long)]
    seed: Option<u64>,

    /// Seed of the speaker encoder weights [default: 0]
    #[arg(long)]
    encoder_seed: Option<u64>,

    #[command(flatten)]
    mask: MaskOpts,
}

#[derive(Args, Debug)]
pub struct MaskArgs {
    input: PathBuf,

    #[command(flatten)]
    mask: MaskOpts,

    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct AttackArgs {
    input: PathBuf,

    /// FGSM, I-FGSM, MI-FGSM, PGD, MEP or I-MEP [default: I-MEP]
    #[arg(long)]
    method: Option<AttackMethod>,

    /// Pull the embedding toward this speaker (default: a seeded random direction)
    #[arg(long)]
    target_wav: Option<PathBuf>,

    /// Write the adversarial wav as 32-bit float instead of 16-bit PCM
    #[arg(long)]
    float32: bool,

    #[command(flatten)]
    hyper: HyperArgs,

    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Comma-separated methods, `baseline` for the clean row only [default: all six]
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,

    /// Lines of `speaker path.wav`; the first file per speaker is its enrollment
    #[arg(long, conflicts_with_all = ["speakers", "utterances", "duration", "corpus_seed", "level"])]
    manifest: Option<PathBuf>,

    /// Synthetic corpus: number of speakers [default: 8]
    #[arg(long)]
    speakers: Option<usize>,

    /// Synthetic corpus: utterances per speaker [default: 10]
    #[arg(long)]
    utterances: Option<usize>,

    /// Synthetic corpus: seconds per utterance [default: 1.0]
    #[arg(long)]
    duration: Option<f64>,

    /// Synthetic corpus seed [default: 0]
    #[arg(long)]
    corpus_seed: Option<u64>,

    /// Synthetic corpus voiced peak amplitude [default: 0.002]
    #[arg(long)]
    level: Option<f64>,

    #[command(flatten)]
    hyper: HyperArgs,

    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct SelfcheckArgs {
    /// json or csv; text when omitted
    #[arg(long)]
    format: Option<Format>,

    /// Deliberately break a component to exercise the failure path
    #[arg(long, hide = true, value_name = "COMPONENT")]
    inject_fault: Option<String>,
}

/// Bad flags, config entries or inputs the user can fix: exit code 2.
#[derive(Debug)]
pub struct UsageError(pub anyhow::Error);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(e: impl Into<anyhow::Error>) -> anyhow::Error {
    anyhow::Error::new(UsageError(e.into()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MEP_LOG_LEVEL", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path).map_err(usage)?,
        None => ConfigFile::default(),
    };
    if let Some(jobs) = file.pick_opt(cli.jobs, "jobs").map_err(usage)? {
        if jobs == 0 {
            return Err(usage(anyhow::anyhow!("--jobs must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(anyhow::Error::from)?;
    }
    match cli.command {
        Command::Mask(args) => commands::mask(args, &file),
        Command::Attack(args) => commands::attack(args, &file),
        Command::Evaluate(args) => commands::evaluate(args, &file),
        Command::Selfcheck(args) => commands::selfcheck(args, &file),
    }
}
