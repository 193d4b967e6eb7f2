use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use dms_cli::commands::{
    cmd_bench, cmd_eval, cmd_model_info, cmd_run, render_bench, render_eval, render_model_info,
    render_run, Format, RunArgs,
};
use dms_cli::config::Config;
use dms_cli::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Text,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Format {
        match f {
            FormatArg::Text => Format::Text,
            FormatArg::Json => Format::Json,
        }
    }
}

/// Driver monitoring pipeline simulator.
#[derive(Debug, Parser)]
#[command(name = "dms", version, about)]
struct Cli {
    /// Configuration file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Report rendering.
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Text)]
    format: FormatArg,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Replay a scenario file through the pipeline and write the state log.
    Run {
        /// Scenario file (line-delimited JSON, one record per frame).
        #[arg(long)]
        scenario: PathBuf,
        /// State log destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the detection interval N.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        interval: Option<u64>,
        /// Override the detection-noise seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the simulated latency table for a list of detection intervals.
    Bench {
        /// Detection intervals to simulate.
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        interval: Vec<u64>,
        /// Frames per simulation.
        #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
        frames: u64,
    },
    /// Report per-layer and total parameters and MACs of an architecture.
    ModelInfo {
        /// Architecture description file.
        #[arg(long)]
        spec: PathBuf,
    },
    /// Compare a prediction file against ground truth.
    Eval {
        /// Predicted records (scenario format with landmarks).
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth records (scenario format with landmarks).
        #[arg(long)]
        gt: PathBuf,
    },
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let format = Format::from(cli.format);
    match &cli.command {
        Command::Run { scenario, out, interval, seed } => {
            let args = RunArgs {
                scenario: scenario.clone(),
                out: out.clone(),
                interval: *interval,
                seed: *seed,
            };
            let (summary, lines) = cmd_run(&cfg, &args)?;
            let rendered = render_run(&summary, &lines, args.out.as_deref(), format)?;
            // With the log on stdout the summary moves to stderr to keep
            // the stream parseable.
            match args.out {
                Some(_) => print!("{rendered}"),
                None => eprint!("{rendered}"),
            }
            log::info!("processed {} frames, final phase {}", summary.frames, summary.final_phase);
        }
        Command::Bench { interval, frames } => {
            let rows = cmd_bench(&cfg, interval, *frames)?;
            print!("{}", render_bench(&rows, format));
        }
        Command::ModelInfo { spec } => {
            let report = cmd_model_info(spec)?;
            print!("{}", render_model_info(&report, format));
        }
        Command::Eval { pred, gt } => {
            let report = cmd_eval(&cfg, pred, gt)?;
            print!("{}", render_eval(&report, format));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("DMS_LOG")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
