use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pickem::pipeline::{run_pipeline, RunMode, RunOptions};
use pickem::report::{Phase, ReportFormats};

/// Backtest money-line betting strategies over a season.
#[derive(Parser)]
#[command(name = "pickem", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the input files and print the join report.
    Ingest(Common),
    /// Write the follow-the-favorite baseline table.
    Baseline(Common),
    /// Run the predictors and write their curves, categorization and summary.
    Backtest(Common),
    /// Baseline plus predictor outputs.
    Report(Common),
    /// Everything, plus run.txt with the effective configuration.
    All(Common),
}

#[derive(Args)]
struct Common {
    /// Season configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
    /// Season phase to report: regular, post or combined.
    #[arg(long, default_value = "combined")]
    phase: Phase,
    /// Only run this predictor id (repeatable).
    #[arg(long = "predictor")]
    predictors: Vec<String>,
    /// Skip the CSV copy of the baseline table.
    #[arg(long)]
    no_csv: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (mode, args) = match cli.command {
        Command::Ingest(a) => (RunMode::Ingest, a),
        Command::Baseline(a) => (RunMode::Baseline, a),
        Command::Backtest(a) => (RunMode::Backtest, a),
        Command::Report(a) => (RunMode::Report, a),
        Command::All(a) => (RunMode::All, a),
    };
    let options = RunOptions {
        mode,
        phase: args.phase,
        predictors: args.predictors,
        formats: ReportFormats { csv: !args.no_csv },
    };
    match run_pipeline(&args.config, &args.out, &options) {
        Ok(outcome) => {
            if mode == RunMode::Ingest {
                print!("{}", outcome.ingested.report);
            } else {
                for note in &outcome.notes {
                    println!("{note}");
                }
                for f in &outcome.files {
                    println!("wrote {}", f.display());
                }
            }
            for e in &outcome.errors {
                eprintln!("error: {e}");
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("fatal: {e}");
            ExitCode::from(2)
        }
    }
}
