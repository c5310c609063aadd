//! `svcforge` command-line entry point.
//!
//! Every subcommand prints a JSON summary on stdout and diagnostics on
//! stderr. Exit status: 0 success, 1 usage error, 2 data or validation
//! error, 3 internal error.

mod cmd;
mod util;

use clap::{Parser, Subcommand};

use util::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "svcforge", version, about = "Singing voice conversion tooling")]
struct Cli {
    /// Worker threads for per-file work (count). Outputs do not depend on it.
    #[arg(long, global = true, env = "SVCFORGE_JOBS", default_value_t = 1)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute log-mel, loudness and F0 tracks from WAV files.
    Extract(cmd::extract::ExtractArgs),
    /// Compute log-F0 statistics for one speaker.
    F0Stats(cmd::pitch::F0StatsArgs),
    /// Transpose an F0 track from a source to a target speaker.
    ConvertPitch(cmd::pitch::ConvertPitchArgs),
    /// Write two randomly perturbed versions of each input.
    Perturb(cmd::perturb::PerturbArgs),
    /// Split recordings by energy or by rests in a note list.
    Segment(cmd::segment::SegmentArgs),
    /// Training-set manifests.
    #[command(subcommand)]
    Manifest(cmd::manifest::ManifestCommand),
    /// Train, adapt and sample the toy diffusion denoiser.
    #[command(subcommand)]
    Ddpm(cmd::ddpm::DdpmCommand),
    /// Objective metrics.
    #[command(subcommand)]
    Eval(cmd::eval::EvalCommand),
    /// Versioned table of numeric defaults.
    #[command(subcommand)]
    Config(cmd::config::ConfigCommand),
}

fn run(cli: Cli) -> CliResult<serde_json::Value> {
    if cli.jobs == 0 {
        return Err(util::usage("--jobs must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Extract(a) => cmd::extract::run(a),
        Command::F0Stats(a) => cmd::pitch::run_stats(a),
        Command::ConvertPitch(a) => cmd::pitch::run_convert(a),
        Command::Perturb(a) => cmd::perturb::run(a),
        Command::Segment(a) => cmd::segment::run(a),
        Command::Manifest(c) => cmd::manifest::run(c),
        Command::Ddpm(c) => cmd::ddpm::run(c),
        Command::Eval(c) => cmd::eval::run(c),
        Command::Config(c) => cmd::config::run(c),
    })
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let outcome = std::panic::catch_unwind(|| run(cli))
        .unwrap_or_else(|_| Err(CliError::Internal("unexpected panic".into())));
    match outcome {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
        }
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    }
}
