use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use score_cli::{run, Mode, Overrides, RunConfig, EXIT_ERROR};

#[derive(Parser)]
#[command(name = "score", version, about = "Statistical certification of Lyapunov sublevel sets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certify one level `rho`.
    Certify(Common),
    /// Bisect for the largest certifiable level.
    Search(Common),
    /// Fit a Gram-matrix candidate and write it to disk.
    Synth(Common),
    /// Run the oracle comparison suite.
    Validate(Common),
    /// Dense Hurwitz scalability table.
    Bench(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration (or a JSON config echoed from a report).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; falls back to SCORE_THREADS, then the config.
    #[arg(long)]
    threads: Option<usize>,
    /// Write block maxima as CSV (certify only).
    #[arg(long)]
    export_blockmax: Option<PathBuf>,
    /// Write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, common) = match cli.command {
        Command::Certify(c) => (Mode::Certify, c),
        Command::Search(c) => (Mode::Search, c),
        Command::Synth(c) => (Mode::Synth, c),
        Command::Validate(c) => (Mode::Validate, c),
        Command::Bench(c) => (Mode::Bench, c),
    };
    let cfg = match &common.config {
        Some(path) => match RunConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("{e}");
                return ExitCode::from(EXIT_ERROR as u8);
            }
        },
        None => RunConfig::default(),
    };
    let ov = Overrides {
        seed: common.seed,
        threads: common.threads,
        report: common.report,
        export_blockmax: common.export_blockmax,
    };
    match run(mode, cfg, &ov) {
        Ok(out) => {
            for line in &out.summary {
                println!("{line}");
            }
            ExitCode::from(out.exit_code as u8)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
