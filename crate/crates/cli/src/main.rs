use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use ragroute_cli::{self as cli, CliError, CommonArgs};
use ragroute_core::config::ConfigLayer;
use ragroute_core::eval::BreakdownKey;
use ragroute_core::synthetic::{self, SynthOptions};

/// Sufficiency-gated question answering over pre-fetched web pages with
/// validated API fallback.
#[derive(Parser)]
#[command(name = "ragroute", version)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Answer one query (a dataset id, a dataset question, or free text).
    Run { query: String },
    /// Run and score a whole dataset; writes traces.jsonl, metrics.csv and report.txt.
    Eval {
        /// Per-category tables: dynamism, domain or question_type. Repeatable.
        #[arg(long)]
        breakdown: Vec<BreakdownKey>,
    },
    /// Pick the sufficiency threshold maximizing F1 on a labelled dev set.
    Tune { dev_set: PathBuf },
    /// Build the schema index and optionally show the top-m schemas for a query.
    Index {
        #[arg(long)]
        query: Option<String>,
    },
    /// Serve canned API responses for every catalog schema until interrupted.
    MockApis {
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Write a synthetic benchmark (datasets, dev set, catalog, fixtures).
    Synth {
        #[arg(long, default_value_t = synthetic::DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = 30)]
        static_queries: usize,
        #[arg(long, default_value_t = 30)]
        dynamic_queries: usize,
        /// Base URL written into the catalog endpoints.
        #[arg(long, default_value = synthetic::DEFAULT_BASE_URL)]
        base_url: String,
    },
    /// Re-score a trace file, optionally against a baseline trace file.
    Report {
        traces: PathBuf,
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long)]
        breakdown: Vec<BreakdownKey>,
    },
}

fn run(args: Cli) -> Result<String, CliError> {
    let config = cli::resolve_config(&args.common, ConfigLayer::from_process_env())?;
    let out = match args.command {
        Command::Run { query } => cli::cmd_run(&query, &config)?.summary(),
        Command::Eval { breakdown } => {
            let report = cli::cmd_eval(&config, &breakdown)?;
            format!(
                "{}\nwrote {}, {}, {}\n",
                report.report,
                report.traces_path.display(),
                report.metrics_path.display(),
                report.report_path.display()
            )
        }
        Command::Tune { dev_set } => {
            let tuned = cli::cmd_tune(&dev_set)?;
            format!("threshold: {}\nf1: {:.4}\n", tuned.threshold, tuned.f1)
        }
        Command::Index { query } => cli::cmd_index(&config, query.as_deref())?,
        Command::MockApis { port, host } => {
            let server = cli::cmd_mock_apis(&config, &format!("{host}:{port}"))?;
            eprintln!("serving mock APIs on {}", server.base_url());
            server.wait();
            String::new()
        }
        Command::Synth { seed, static_queries, dynamic_queries, base_url } => {
            let opts = SynthOptions { seed, static_queries, dynamic_queries, base_url };
            let dir = args.common.output.clone().unwrap_or_else(|| PathBuf::from("synthetic"));
            let files = cli::cmd_synth(&opts, &config, &dir)?;
            [&files.dataset, &files.dev_dataset, &files.dev_set, &files.catalog, &files.fixtures]
                .iter()
                .map(|path| format!("wrote {}\n", path.display()))
                .collect()
        }
        Command::Report { traces, baseline, breakdown } => cli::cmd_report(&traces, baseline.as_deref(), &config, &breakdown)?,
    };
    Ok(out)
}

fn main() -> ExitCode {
    let args = Cli::parse();
    match run(args).context("ragroute failed") {
        // a closed pipe (e.g. `| head`) is not a failure
        Ok(out) => match std::io::stdout().lock().write_all(out.as_bytes()) {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
            _ => ExitCode::SUCCESS,
        },
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<CliError>().map_or(1, CliError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
