use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fractam::cli;
use fractam::config::{Mode, RunConfig};

#[derive(Parser)]
#[command(
    name = "fractam",
    about = "Fact-grounded reasoning pipeline and evaluation suite for MISID-format session corpora",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Corpus file; overrides the config's corpus_path.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Output directory; overrides the config's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Input mode; overrides the config's mode.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    /// Warn on unknown corpus fields and dropped evidence steps instead of
    /// failing.
    #[arg(long)]
    lenient: bool,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    match s {
        "full" => Ok(Mode::Full),
        "text_only" => Ok(Mode::TextOnly),
        other => Err(format!(
            "unknown mode `{other}` (expected full or text_only)"
        )),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate and normalize a corpus; print its label tallies.
    Ingest {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the decouple-anchor-reason pipeline over a corpus.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Reuse per-turn checkpoints from an interrupted run.
        #[arg(long)]
        resume: bool,
    },
    /// Score a predictions file against the gold corpus.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Predictions file produced by `run`.
        #[arg(long)]
        predictions: PathBuf,
        /// Report row label; defaults to the configured model.
        #[arg(long)]
        model_id: Option<String>,
    },
    /// Merge per-model report files into one comparison table.
    Report {
        /// Report files produced by `evaluate`.
        inputs: Vec<PathBuf>,
        /// Write the merged table here as well as printing it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(common: &CommonArgs) -> Result<RunConfig, cli::CliError> {
    let mut config = RunConfig::load(&common.config)?;
    if let Some(mode) = common.mode {
        config.mode = mode;
    }
    if common.lenient {
        config.lenient = true;
    }
    Ok(config)
}

fn run() -> Result<(), cli::CliError> {
    let parsed = Cli::parse();
    match parsed.command {
        Command::Ingest { common } => {
            let config = load_config(&common)?;
            let tally = cli::cmd_ingest(
                &config,
                common.corpus.as_deref(),
                common.out.as_deref(),
                common.lenient,
            )?;
            println!("{tally}");
        }
        Command::Run { common, resume } => {
            let config = load_config(&common)?;
            let summary = cli::cmd_run(
                &config,
                common.corpus.as_deref(),
                common.out.as_deref(),
                resume,
            )?;
            println!(
                "wrote {} predictions across {} sessions to {}",
                summary.predictions,
                summary.sessions,
                summary.out_dir.display()
            );
        }
        Command::Evaluate {
            common,
            predictions,
            model_id,
        } => {
            let config = load_config(&common)?;
            let report = cli::cmd_evaluate(
                &config,
                &predictions,
                common.corpus.as_deref(),
                common.out.as_deref(),
                model_id.as_deref(),
            )?;
            print!(
                "{}",
                fractam::report::render_table(&[fractam::report::ReportRow::from(&report)])
            );
        }
        Command::Report { inputs, out } => {
            let table = cli::cmd_report(&inputs, out.as_deref())?;
            print!("{table}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
