//! hopper — hot-folder CSV ingestion.
//!
//! Exit codes: 0 when every file completed (or there was nothing to do),
//! 1 when the run finished but at least one file ended in Exception,
//! 2 on fatal configuration or store failures. Standard output carries only
//! machine-readable result lines; diagnostics go to standard error.

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::Context;
use clap::{Parser, Subcommand};

use hopper_core::catalog::{Catalog, EntryFilter, FileStatus, LogEntry};
use hopper_core::config::{self, ConfigOverrides, PipelineConfig};
use hopper_core::csv::{open_record_stream, Field, ParseError, ParseProfile};
use hopper_core::detect::{detect_header, HeaderStatus};
use hopper_core::pipeline::{self, open_stores, run_pipeline, RunReport};

#[derive(Parser)]
#[command(name = "hopper", version, about = "Automated hot-folder CSV ingestion")]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Folder holding incoming .csv files.
    #[arg(long, value_name = "DIR")]
    source: Option<PathBuf>,
    /// Workspace root with the In/InProgress/Archive/Exception folders and
    /// the stores.
    #[arg(long, value_name = "DIR")]
    root: Option<PathBuf>,
    /// key = value configuration file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Batch flush threshold in records.
    #[arg(long, value_name = "N")]
    threshold: Option<usize>,
    /// 1-based field position that must never be null in the sampled rows.
    #[arg(long, value_name = "N")]
    critical_column: Option<u32>,
    /// Number of files processed in parallel.
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Commands {
    /// Create the workspace folders and empty stores.
    Init {
        #[arg(long, value_name = "DIR")]
        root: PathBuf,
    },
    /// Sweep the source folder once.
    Run(RunArgs),
    /// Sweep repeatedly until interrupted.
    Watch {
        /// Seconds between sweeps.
        #[arg(long, value_name = "SECONDS", default_value_t = 30)]
        interval: u64,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Inspect the audit log.
    Log {
        /// Workspace root holding the catalog.
        #[arg(long, value_name = "DIR")]
        root: PathBuf,
        #[command(subcommand)]
        action: LogAction,
    },
    /// Tokenize one file and print its records.
    Parse {
        file: PathBuf,
        /// Treat a line break inside quotes as an error.
        #[arg(long)]
        no_quoted_newlines: bool,
    },
}

#[derive(Subcommand)]
enum LogAction {
    /// One line per entry in audit-column order.
    List {
        /// Filter by status: IN_PROGRESS, COMPLETE, or INCOMPLETE.
        #[arg(long, value_name = "S")]
        status: Option<FileStatus>,
        /// Only duplicate-flagged entries.
        #[arg(long)]
        dup: bool,
    },
    /// Every field of one entry.
    Show { sr: u64 },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("hopper: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Commands::Init { root } => {
            pipeline::init_workspace(&root, config::DEFAULT_TABLE_WIDTH)
                .with_context(|| format!("initializing {}", root.display()))?;
            Ok(ExitCode::SUCCESS)
        }
        Commands::Run(args) => {
            let config = effective_config(&args)?;
            cmd_run(&config, None)
        }
        Commands::Watch { interval, run } => {
            anyhow::ensure!(interval >= 1, "watch interval must be at least 1 second");
            let config = effective_config(&run)?;
            cmd_watch(&config, interval)
        }
        Commands::Log { root, action } => cmd_log(&root, action),
        Commands::Parse {
            file,
            no_quoted_newlines,
        } => cmd_parse(&file, no_quoted_newlines),
    }
}

fn effective_config(args: &RunArgs) -> anyhow::Result<PipelineConfig> {
    let overrides = ConfigOverrides {
        source_dir: args.source.clone(),
        root_dir: args.root.clone(),
        batch_threshold: args.threshold,
        critical_column: args.critical_column,
        workers: args.workers,
    };
    Ok(config::load_config(args.config.as_deref(), &overrides)?)
}

/// Exit code for a finished sweep: a pure function of the report.
fn exit_status(report: &RunReport) -> u8 {
    if report.any_exception() {
        1
    } else {
        0
    }
}

fn print_report(report: &RunReport) {
    for outcome in &report.outcomes {
        let rows = outcome
            .rows
            .map_or_else(|| "NULL".to_string(), |r| r.to_string());
        let cols = outcome
            .cols
            .map_or_else(|| "NULL".to_string(), |c| c.to_string());
        println!(
            "{} {} rows={rows} cols={cols}",
            outcome.fil_name, outcome.final_state
        );
        if outcome.parse_warnings > 0 {
            eprintln!(
                "hopper: {}: {} parse warning(s) tolerated",
                outcome.fil_name, outcome.parse_warnings
            );
        }
        if outcome.rejects > 0 {
            eprintln!(
                "hopper: {}: {} ragged record(s) quarantined",
                outcome.fil_name, outcome.rejects
            );
        }
        if outcome.sink_failures > 0 {
            eprintln!(
                "hopper: {}: {} notification sink(s) failed",
                outcome.fil_name, outcome.sink_failures
            );
        }
    }
}

fn cmd_run(config: &PipelineConfig, cancel: Option<&AtomicBool>) -> anyhow::Result<ExitCode> {
    let stores = open_stores(&config.root_dir, config.table_width)?;
    let sinks = config.build_sinks();
    match run_pipeline(config, &stores, &sinks, cancel) {
        Ok(report) => {
            print_report(&report);
            Ok(ExitCode::from(exit_status(&report)))
        }
        Err(failure) => {
            print_report(&failure.partial);
            Err(failure.error.into())
        }
    }
}

fn cmd_watch(config: &PipelineConfig, interval: u64) -> anyhow::Result<ExitCode> {
    let stop = Arc::new(AtomicBool::new(false));
    {
        let stop = stop.clone();
        ctrlc::set_handler(move || stop.store(true, Ordering::SeqCst))
            .context("installing interrupt handler")?;
    }
    let stores = open_stores(&config.root_dir, config.table_width)?;
    let sinks = config.build_sinks();
    while !stop.load(Ordering::SeqCst) {
        match run_pipeline(config, &stores, &sinks, Some(&stop)) {
            Ok(report) => print_report(&report),
            Err(failure) => {
                print_report(&failure.partial);
                return Err(failure.error.into());
            }
        }
        // Sleep in short slices so an interrupt lands promptly.
        let deadline = Instant::now() + Duration::from_secs(interval);
        while Instant::now() < deadline && !stop.load(Ordering::SeqCst) {
            std::thread::sleep(Duration::from_millis(100));
        }
    }
    Ok(ExitCode::SUCCESS)
}

const LIST_HEADER: &str =
    "SR_NUM\tFIL_TYPE\tFIL_NAME\tFIL_PATH\tFIL_SIZE\tHEADER\tFIL_STATUS\tDUP_FILE\tROWS_NUM\tCOL_NUM";

fn list_line(entry: &LogEntry) -> String {
    let rows = entry
        .rows_num
        .map_or_else(|| "NULL".to_string(), |r| r.to_string());
    let cols = entry
        .col_num
        .map_or_else(|| "NULL".to_string(), |c| c.to_string());
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{rows}\t{cols}",
        entry.sr_num,
        entry.fil_type,
        entry.fil_name,
        entry.fil_path,
        entry.fil_size,
        entry.header_label(),
        entry.fil_status,
        entry.dup_label(),
    )
}

fn cmd_log(root: &PathBuf, action: LogAction) -> anyhow::Result<ExitCode> {
    let catalog = Catalog::open(&pipeline::catalog_path(root))?;
    match action {
        LogAction::List { status, dup } => {
            let filter = EntryFilter {
                status,
                dup_file: dup.then_some(true),
                name_substring: None,
            };
            println!("{LIST_HEADER}");
            for entry in catalog.query(&filter) {
                println!("{}", list_line(&entry));
            }
            Ok(ExitCode::SUCCESS)
        }
        LogAction::Show { sr } => match catalog.get(sr) {
            Ok(entry) => {
                println!("SR_NUM={}", entry.sr_num);
                println!("FIL_TYPE={}", entry.fil_type);
                println!("FIL_NAME={}", entry.fil_name);
                println!("FIL_PATH={}", entry.fil_path);
                println!("FIL_SIZE={}", entry.fil_size);
                println!("HEADER={}", entry.header_label());
                println!("FIL_STATUS={}", entry.fil_status);
                println!("DUP_FILE={}", entry.dup_label());
                println!(
                    "ROWS_NUM={}",
                    entry.rows_num.map_or_else(|| "NULL".into(), |r: u64| r.to_string())
                );
                println!(
                    "COL_NUM={}",
                    entry.col_num.map_or_else(|| "NULL".into(), |c: u32| c.to_string())
                );
                println!("REJECTS_NUM={}", entry.rejects_num);
                println!("CREATED_AT={}", entry.created_at.to_rfc3339());
                println!("MODIFIED_AT={}", entry.modified_at.to_rfc3339());
                Ok(ExitCode::SUCCESS)
            }
            Err(e) => {
                eprintln!("hopper: {e}");
                Ok(ExitCode::from(1))
            }
        },
    }
}

fn parse_error_line(error: &ParseError) -> String {
    match error {
        ParseError::Encoding { offset } => format!("EncodingError offset {offset}"),
        ParseError::UnterminatedQuote { line } => format!("UnterminatedQuote line {line}"),
        ParseError::QuotedNewlineForbidden { line } => {
            format!("QuotedNewlineForbidden line {line}")
        }
        ParseError::Io(e) => format!("IoError: {e}"),
    }
}

fn cmd_parse(file: &PathBuf, no_quoted_newlines: bool) -> anyhow::Result<ExitCode> {
    let profile = ParseProfile::new(',', !no_quoted_newlines).expect("comma is valid");
    let handle = File::open(file).with_context(|| format!("opening {}", file.display()))?;
    let mut stream = open_record_stream(BufReader::new(handle), profile);

    let first = stream.next();
    let header = match &first {
        Some(Ok(record)) => detect_header(record),
        _ => HeaderStatus::NotPresent,
    };
    println!("header: {header}");

    // One printed line per record: embedded line breaks in decoded fields
    // are escaped so the record stays on one line.
    fn render_field(field: &Field) -> String {
        match field {
            Field::Absent => "∅".to_string(),
            Field::Present(text) => text
                .replace('\\', "\\\\")
                .replace('\r', "\\r")
                .replace('\n', "\\n"),
        }
    }

    let mut failed = false;
    let emit = |result: Result<hopper_core::csv::Record, ParseError>| match result {
        Ok(record) => {
            let line: Vec<String> = record.fields.iter().map(render_field).collect();
            println!("{}", line.join("\t"));
            false
        }
        Err(e) => {
            eprintln!("{}", parse_error_line(&e));
            true
        }
    };
    if let Some(result) = first {
        failed |= emit(result);
    }
    if !failed {
        for result in stream.by_ref() {
            if emit(result) {
                failed = true;
                break;
            }
        }
    }
    for warning in stream.warnings() {
        eprintln!("warning: {warning}");
    }
    Ok(if failed {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}
