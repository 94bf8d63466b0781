//! Command-line entry points: run the pipeline, emit reports, calibrate
//! against manual labels, summarize datasets, and record replay fixtures.

use clap::{Args, Parser, Subcommand};
use dslbench::dataset;
use dslbench::orchestrator::{self, GatewaySetup, OrchestratorError, RunConfig, RunStore};
use dslbench::report::{self, ReportFormat};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dslbench", version)]
#[command(about = "Evaluate LLM code generation for constraint DSLs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration JSON.
    #[arg(long)]
    config: PathBuf,
    /// Run store root directory.
    #[arg(long, default_value = "runs")]
    store: PathBuf,
    /// Serve all gateway traffic from this recorded exchange store.
    #[arg(long, conflicts_with = "record")]
    replay: Option<PathBuf>,
    /// Record live gateway traffic into this exchange store.
    #[arg(long)]
    record: Option<PathBuf>,
    /// Render all prompt plans and exit without calling or writing anything.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Execute (or resume) a run over the configuration grid.
    Run(RunArgs),
    /// Emit report tables from a run store.
    Report {
        run_id: String,
        #[arg(long, default_value = "runs")]
        store: PathBuf,
        #[arg(long, default_value = "csv", value_parser = parse_format)]
        format: ReportFormat,
        /// Output directory; defaults to <store>/<run_id>/reports.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare validator and judge decisions against manual labels.
    Calibrate {
        run_id: String,
        /// labels.jsonl with {"snippet_ref", "wf_label", "correctness_label", "annotator"}.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value = "runs")]
        store: PathBuf,
        #[arg(long, default_value = "csv", value_parser = parse_format)]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print summary statistics for a dataset directory.
    Stats { dataset_root: PathBuf },
    /// Run against live providers while recording every exchange, producing
    /// a replay store for offline reruns.
    ReplayRecord {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "runs")]
        store: PathBuf,
        /// Directory for the recorded exchange store.
        #[arg(long)]
        record: PathBuf,
    },
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    match s {
        "csv" => Ok(ReportFormat::Csv),
        "md" => Ok(ReportFormat::Md),
        other => Err(format!("unknown format '{other}' (expected csv or md)")),
    }
}

/// Exit codes: 0 completed, 1 runtime abort, 2 usage or config error.
fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) | CliError::Runtime(msg) => f.write_str(msg),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<OrchestratorError> for CliError {
    fn from(err: OrchestratorError) -> Self {
        match err {
            OrchestratorError::InvalidConfig(_)
            | OrchestratorError::ConfigMismatch { .. }
            | OrchestratorError::MissingStore(_) => CliError::Config(err.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn load_config(path: &PathBuf) -> Result<RunConfig, CliError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("reading {}: {e}", path.display())))?;
    RunConfig::from_json(&raw).map_err(CliError::from)
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run(args) => {
            let config = load_config(&args.config)?;
            if args.dry_run {
                let plans = orchestrator::dry_run(&config).map_err(CliError::from)?;
                for (cell, plan) in &plans {
                    println!(
                        "{} rounds={} expects={}",
                        cell.render(),
                        plan.rounds.len(),
                        plan.expects_outputs
                    );
                }
                println!("{} plans rendered (dry run, nothing executed)", plans.len());
                return Ok(());
            }
            let setup = gateway_setup(&args)?;
            let store = orchestrator::run(&config, &args.store, &setup)?;
            print_run_summary(&store);
            Ok(())
        }
        Command::ReplayRecord { config, store, record } => {
            let config = load_config(&config)?;
            let setup = GatewaySetup::Record(record);
            let store = orchestrator::run(&config, &store, &setup)?;
            print_run_summary(&store);
            Ok(())
        }
        Command::Report { run_id, store, format, out } => {
            let store = RunStore::load(&store, &run_id).map_err(CliError::from)?;
            let bundle =
                report::build_bundle(&store).map_err(|e| CliError::Runtime(e.to_string()))?;
            let out = out.unwrap_or_else(|| store.dir.join("reports"));
            let written =
                report::write_tables(&bundle.tables(), &bundle.chi_square_notices, &out, format)
                    .map_err(|e| CliError::Runtime(e.to_string()))?;
            for notice in &bundle.chi_square_notices {
                eprintln!("notice: {notice}");
            }
            for path in written {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Calibrate { run_id, labels, store, format, out } => {
            let store = RunStore::load(&store, &run_id).map_err(CliError::from)?;
            let labels =
                dataset::load_labels(&labels).map_err(|e| CliError::Config(e.to_string()))?;
            let bundle = report::build_calibration(&store, &labels)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            let out = out.unwrap_or_else(|| store.dir.join("reports"));
            let tables =
                [&bundle.calibration, &bundle.confusion_wf, &bundle.confusion_correctness];
            let written = report::write_tables(&tables, &[], &out, format)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            for path in written {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Stats { dataset_root } => {
            let ds = dataset::load_dataset(&dataset_root)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let stats = dataset::dataset_stats(&ds);
            let name = dataset_root
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| dataset_root.display().to_string());
            let table = report::stats_table(&name, &stats);
            print!("{}", table.to_md());
            Ok(())
        }
    }
}

fn gateway_setup(args: &RunArgs) -> Result<GatewaySetup, CliError> {
    Ok(match (&args.replay, &args.record) {
        (Some(replay), None) => GatewaySetup::Replay(replay.clone()),
        (None, Some(record)) => GatewaySetup::Record(record.clone()),
        (None, None) => GatewaySetup::Live,
        (Some(_), Some(_)) => {
            return Err(CliError::Config("--replay and --record are exclusive".into()))
        }
    })
}

fn print_run_summary(store: &RunStore) {
    use dslbench::orchestrator::AttemptStatus;
    let mut correct = 0;
    let mut incorrect = 0;
    let mut wf_failed = 0;
    let mut errors = 0;
    for record in &store.records {
        match record.status {
            AttemptStatus::Correct => correct += 1,
            AttemptStatus::Incorrect => incorrect += 1,
            AttemptStatus::WfFailed => wf_failed += 1,
            AttemptStatus::Error => errors += 1,
        }
    }
    println!(
        "run {}: {} attempts ({correct} correct, {incorrect} incorrect, {wf_failed} wf-failed, {errors} errors)",
        store.config.run_id,
        store.records.len()
    );
    println!("store: {}", store.dir.display());
}
