use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod config;
mod features;
mod fit;
mod manifest;
mod post;
mod synth;

/// Hierarchical multidimensional scaling of replicate distance matrices.
#[derive(Debug, Parser)]
#[command(name = "hmds", version, about)]
struct Cli {
    /// Cap on worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract tempo, dynamics and flatness curves from WAV recordings.
    Features(features::FeaturesArgs),
    /// Build a normalized Hellinger distance tensor from curve files.
    Distances(features::DistancesArgs),
    /// Maximum likelihood estimates of delta, tau and psi.
    Mle(fit::MleArgs),
    /// Run the MCMC sampler.
    Sample(fit::SampleArgs),
    /// Effective sample sizes, posterior predictive checks and traces.
    Diagnose(post::DiagnoseArgs),
    /// Posterior mean dissimilarities, dendrogram and aligned embeddings.
    Summarize(post::SummarizeArgs),
    /// Generate synthetic tensors or audio with known ground truth.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Debug, Subcommand)]
enum SynthCommand {
    /// Simulate a distance tensor from a random model state.
    Tensor(synth::TensorArgs),
    /// Render warped melodies with known tempo and gain profiles.
    Audio(synth::AudioArgs),
}

/// Output location shared by subcommands.
#[derive(Debug, Clone, Args)]
pub struct OutArg {
    /// Output file or directory.
    #[arg(short, long)]
    pub out: PathBuf,
}

/// A problem with how the command was invoked rather than with the data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(UsageError("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let threads = rayon::current_num_threads();
    match cli.command {
        Command::Features(a) => features::features(a, threads),
        Command::Distances(a) => features::distances(a, threads),
        Command::Mle(a) => fit::mle(a, threads),
        Command::Sample(a) => fit::sample(a, threads),
        Command::Diagnose(a) => post::diagnose(a, threads),
        Command::Summarize(a) => post::summarize(a, threads),
        Command::Synth(SynthCommand::Tensor(a)) => synth::tensor(a, threads),
        Command::Synth(SynthCommand::Audio(a)) => synth::audio(a, threads),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
