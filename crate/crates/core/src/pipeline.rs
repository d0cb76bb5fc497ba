//! End-to-end ingestion: sweep the source folder and drive every candidate
//! file through intake, size guard, header check, duplicate and critical
//! checks, batched loading, and the final move to Archive or Exception,
//! with an audit-log update at each step and one notification per terminal
//! state.
//!
//! Per-file problems (bad bytes, ragged structure, duplicates) quarantine
//! that file and never abort the sweep; store and filesystem failures are
//! fatal and abort with a partial report.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use thiserror::Error;

use crate::catalog::{Catalog, CatalogError, EntryPatch, FileStatus};
use crate::config::PipelineConfig;
use crate::csv::{open_record_stream, ParseError, ParseProfile, Record};
use crate::detect::{
    detect_header, fingerprint_file, validate_critical, CriticalOutcome, CriticalRule,
    HeaderStatus, RefStoreError, ReferenceStore, SAMPLE_ROWS,
};
use crate::loader::{detect_column_count, BatchBuffer, LoaderError};
use crate::notify::{notify, Notification, NotifyEvent, Sink};
use crate::table::{GenericTable, TableError};
use crate::workflow::{
    ensure_folders, guard_size, scan_source, transition, ExceptionReason, FileState, FolderSet,
    ManagedFile, SizeCheck, WorkflowError,
};

/// Infrastructure failure: stores or filesystem. Always fatal to the run.
#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Reference(#[from] RefStoreError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
}

/// The three persistent stores behind one workspace root.
pub struct Stores {
    pub catalog: Mutex<Catalog>,
    pub reference: Mutex<ReferenceStore>,
    pub table: Mutex<GenericTable>,
}

pub fn catalog_path(root: &Path) -> PathBuf {
    root.join("catalog.jsonl")
}

pub fn reference_path(root: &Path) -> PathBuf {
    root.join("reference.jsonl")
}

pub fn table_dir(root: &Path) -> PathBuf {
    root.join("table")
}

/// Opens (creating as needed) the stores under `root` and reconciles the
/// generic table with the audit log: rows belonging to a file that never
/// reached COMPLETE are dropped, so an interrupted run leaves no residue.
pub fn open_stores(root: &Path, table_width: u32) -> Result<Stores, StoreError> {
    fs::create_dir_all(root)?;
    let stores = Stores {
        catalog: Mutex::new(Catalog::open(&catalog_path(root))?),
        reference: Mutex::new(ReferenceStore::open(&reference_path(root))?),
        table: Mutex::new(GenericTable::open(&table_dir(root), table_width)?),
    };
    reconcile(&stores)?;
    Ok(stores)
}

fn reconcile(stores: &Stores) -> Result<(), StoreError> {
    let serials = stores.table.lock().expect("table lock").source_serials()?;
    for sr in serials {
        let complete = {
            let catalog = stores.catalog.lock().expect("catalog lock");
            catalog
                .get(sr)
                .map(|e| e.fil_status == FileStatus::Complete)
                .unwrap_or(false)
        };
        if !complete {
            stores.table.lock().expect("table lock").abort_file(sr)?;
        }
    }
    Ok(())
}

/// Creates the folder set and empty stores. Idempotent.
pub fn init_workspace(root: &Path, table_width: u32) -> Result<(), StoreError> {
    ensure_folders(root)?;
    open_stores(root, table_width)?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct FileOutcome {
    pub sr_num: u64,
    pub fil_name: String,
    pub final_state: FileState,
    pub rows: Option<u64>,
    pub cols: Option<u32>,
    pub rejects: u64,
    pub parse_warnings: usize,
    pub sink_failures: usize,
}

#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub outcomes: Vec<FileOutcome>,
}

impl RunReport {
    pub fn all_complete(&self) -> bool {
        self.outcomes
            .iter()
            .all(|o| o.final_state == FileState::Archived)
    }

    pub fn any_exception(&self) -> bool {
        self.outcomes
            .iter()
            .any(|o| matches!(o.final_state, FileState::Exception(_)))
    }
}

/// A fatal failure part-way through a sweep; outcomes for files that did
/// finish are preserved.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct PipelineFailure {
    pub error: StoreError,
    pub partial: RunReport,
}

struct FileContext<'a> {
    config: &'a PipelineConfig,
    stores: &'a Stores,
    sinks: &'a [Box<dyn Sink>],
    folders: &'a FolderSet,
    profile: ParseProfile,
    rule: CriticalRule,
}

/// One full sweep over the source folder. Files are claimed in name order;
/// `cancel` stops the sweep between files, finishing the one in flight.
pub fn run_pipeline(
    config: &PipelineConfig,
    stores: &Stores,
    sinks: &[Box<dyn Sink>],
    cancel: Option<&AtomicBool>,
) -> Result<RunReport, PipelineFailure> {
    let fatal = |error: StoreError| PipelineFailure {
        error,
        partial: RunReport::default(),
    };
    let folders = ensure_folders(&config.root_dir)
        .map_err(|e| fatal(StoreError::Io(e)))?;
    let candidates = scan_source(&config.source_dir).map_err(|e| fatal(StoreError::Io(e)))?;
    let profile = ParseProfile::new(',', config.allow_quoted_newlines)
        .expect("comma is a valid delimiter");
    let ctx = FileContext {
        config,
        stores,
        sinks,
        folders: &folders,
        profile,
        rule: CriticalRule {
            column_index: config.critical_column,
        },
    };

    let next = AtomicUsize::new(0);
    let collected: Mutex<Vec<(usize, FileOutcome)>> = Mutex::new(Vec::new());
    let failure: Mutex<Option<StoreError>> = Mutex::new(None);

    let claim_loop = || {
        loop {
            if cancel.is_some_and(|c| c.load(Ordering::SeqCst)) {
                break;
            }
            if failure.lock().expect("failure lock").is_some() {
                break;
            }
            let i = next.fetch_add(1, Ordering::SeqCst);
            if i >= candidates.len() {
                break;
            }
            match process_file(&ctx, &candidates[i]) {
                Ok(Some(outcome)) => {
                    collected.lock().expect("outcome lock").push((i, outcome));
                }
                Ok(None) => {} // vanished between scan and intake
                Err(e) => {
                    failure.lock().expect("failure lock").get_or_insert(e);
                    break;
                }
            }
        }
    };

    let workers = config.workers.max(1).min(candidates.len().max(1));
    if workers <= 1 {
        claim_loop();
    } else {
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(claim_loop);
            }
        });
    }

    let mut outcomes = collected.into_inner().expect("outcome lock");
    outcomes.sort_by_key(|(i, _)| *i);
    let report = RunReport {
        outcomes: outcomes.into_iter().map(|(_, o)| o).collect(),
    };
    match failure.into_inner().expect("failure lock") {
        Some(error) => Err(PipelineFailure {
            error,
            partial: report,
        }),
        None => Ok(report),
    }
}

/// Drives one file start to finish. `Ok(None)` means the file disappeared
/// before intake; content-level failures come back as Exception outcomes.
fn process_file(ctx: &FileContext, path: &Path) -> Result<Option<FileOutcome>, StoreError> {
    let name = match path.file_name() {
        Some(n) => n.to_string_lossy().into_owned(),
        None => return Ok(None),
    };
    let size = match fs::metadata(path) {
        Ok(meta) => meta.len(),
        Err(_) => return Ok(None),
    };

    let sr = ctx
        .stores
        .catalog
        .lock()
        .expect("catalog lock")
        .append_entry(&name, &path.display().to_string(), size)?;
    let mut file = ManagedFile {
        sr_num: sr,
        name,
        current_path: path.to_path_buf(),
        size_bytes: size,
        state: FileState::Received,
    };

    if guard_size(size, ctx.config.max_file_size_bytes) == SizeCheck::TooLarge {
        let detail = format!(
            "file size {size} exceeds limit {}",
            ctx.config.max_file_size_bytes
        );
        return quarantine(ctx, &mut file, ExceptionReason::TooLarge, detail, false).map(Some);
    }

    // Header check. A first record that cannot be parsed is deferred: the
    // load stage will hit the same bytes and record the real failure.
    let header = {
        let handle = fs::File::open(&file.current_path)?;
        let mut stream = open_record_stream(BufReader::new(handle), ctx.profile);
        match stream.next() {
            None => HeaderStatus::NotPresent,
            Some(Ok(record)) => detect_header(&record),
            Some(Err(_)) => HeaderStatus::NotPresent,
        }
    };
    transition(&mut file, FileState::In, ctx.folders, &ctx.stores.catalog)?;
    ctx.stores
        .catalog
        .lock()
        .expect("catalog lock")
        .update_entry(
            sr,
            &EntryPatch {
                header: Some(header),
                ..Default::default()
            },
        )?;

    // Duplicate and critical checks over the leading data records.
    let mut sample: Vec<Record> = Vec::new();
    let mut sample_complete = true;
    {
        let handle = fs::File::open(&file.current_path)?;
        let mut stream = open_record_stream(BufReader::new(handle), ctx.profile);
        if header == HeaderStatus::Present {
            match stream.next() {
                Some(Ok(_)) | None => {}
                Some(Err(_)) => sample_complete = false,
            }
        }
        while sample_complete && sample.len() < SAMPLE_ROWS {
            match stream.next() {
                None => break,
                Some(Ok(record)) => sample.push(record),
                Some(Err(_)) => sample_complete = false,
            }
        }
    }
    if sample_complete {
        let fp = fingerprint_file(&sample);
        // An empty sample identifies nothing; files with no data rows are
        // exempt from duplicate tracking.
        if fp.sampled_rows() > 0 {
            let duplicate = ctx
                .stores
                .reference
                .lock()
                .expect("reference lock")
                .check_duplicate(&fp);
            if duplicate {
                return quarantine(
                    ctx,
                    &mut file,
                    ExceptionReason::Duplicate,
                    "leading rows match a previously processed file".to_string(),
                    true,
                )
                .map(Some);
            }
            if let CriticalOutcome::Violation { record_ordinal } =
                validate_critical(&sample, &ctx.rule)
            {
                let column = ctx.rule.column_index.unwrap_or_default();
                let detail = format!(
                    "null value in critical column {column} at data record {record_ordinal}"
                );
                return quarantine(ctx, &mut file, ExceptionReason::CriticalNull, detail, false)
                    .map(Some);
            }
            let registered = ctx
                .stores
                .reference
                .lock()
                .expect("reference lock")
                .register(&fp, sr);
            match registered {
                Ok(()) => {}
                Err(RefStoreError::DuplicateDigest { .. }) => {
                    // Lost a check-then-register race: treat as duplicate.
                    return quarantine(
                        ctx,
                        &mut file,
                        ExceptionReason::Duplicate,
                        "leading rows match a previously processed file".to_string(),
                        true,
                    )
                    .map(Some);
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    transition(&mut file, FileState::InProgress, ctx.folders, &ctx.stores.catalog)?;

    // Parse and load.
    let handle = fs::File::open(&file.current_path)?;
    let mut stream = open_record_stream(BufReader::new(handle), ctx.profile);
    let first = match stream.next() {
        None => {
            return quarantine(
                ctx,
                &mut file,
                ExceptionReason::ParseFailure,
                "file contains no records".to_string(),
                false,
            )
            .map(Some);
        }
        Some(Err(e)) => {
            return quarantine(ctx, &mut file, reason_for(&e), e.to_string(), false).map(Some);
        }
        Some(Ok(record)) => record,
    };
    let col_num = match detect_column_count(&first, ctx.config.table_width) {
        Ok(col) => col,
        Err(LoaderError::TooManyColumns { found, width }) => {
            let detail = format!("record has {found} fields, more than the table width {width}");
            return quarantine(ctx, &mut file, ExceptionReason::ParseFailure, detail, false)
                .map(Some);
        }
        Err(LoaderError::Store(e)) => return Err(e.into()),
    };

    let mut buffer = BatchBuffer::new(ctx.config.batch_threshold, col_num, sr);
    if header == HeaderStatus::NotPresent {
        push_record(&mut buffer, ctx, first)?;
    }
    loop {
        match stream.next() {
            None => break,
            Some(Ok(record)) => push_record(&mut buffer, ctx, record)?,
            Some(Err(e)) => {
                abort_load(&mut buffer, ctx)?;
                return quarantine(ctx, &mut file, reason_for(&e), e.to_string(), false).map(Some);
            }
        }
    }
    let parse_warnings = stream.warnings().len();
    let result = match buffer.finalize(&ctx.stores.table) {
        Ok(result) => result,
        Err(LoaderError::Store(e)) => return Err(e.into()),
        Err(LoaderError::TooManyColumns { .. }) => unreachable!("finalize never measures width"),
    };

    ctx.stores
        .catalog
        .lock()
        .expect("catalog lock")
        .update_entry(
            sr,
            &EntryPatch {
                fil_status: Some(FileStatus::Complete),
                rows_num: Some(result.rows_loaded),
                col_num: Some(result.col_num),
                rejects_num: Some(result.rejects),
                ..Default::default()
            },
        )?;
    transition(&mut file, FileState::Archived, ctx.folders, &ctx.stores.catalog)?;
    let delivery = notify(
        &Notification::success(sr, &file.name, result.rows_loaded, result.col_num),
        ctx.sinks,
    );

    Ok(Some(FileOutcome {
        sr_num: sr,
        fil_name: file.name,
        final_state: FileState::Archived,
        rows: Some(result.rows_loaded),
        cols: Some(result.col_num),
        rejects: result.rejects,
        parse_warnings,
        sink_failures: delivery.failures().count(),
    }))
}

fn push_record(
    buffer: &mut BatchBuffer,
    ctx: &FileContext,
    record: Record,
) -> Result<(), StoreError> {
    match buffer.push(&ctx.stores.table, record) {
        Ok(_) => Ok(()),
        Err(LoaderError::Store(e)) => Err(e.into()),
        Err(LoaderError::TooManyColumns { .. }) => unreachable!("push quarantines wide records"),
    }
}

fn abort_load(buffer: &mut BatchBuffer, ctx: &FileContext) -> Result<(), StoreError> {
    match buffer.abort(&ctx.stores.table) {
        Ok(()) => Ok(()),
        Err(LoaderError::Store(e)) => Err(e.into()),
        Err(LoaderError::TooManyColumns { .. }) => unreachable!("abort never measures width"),
    }
}

fn reason_for(error: &ParseError) -> ExceptionReason {
    match error {
        ParseError::Encoding { .. } => ExceptionReason::Encoding,
        _ => ExceptionReason::ParseFailure,
    }
}

/// Moves the file to Exception, marks the log entry, and emits the matching
/// notification.
fn quarantine(
    ctx: &FileContext,
    file: &mut ManagedFile,
    reason: ExceptionReason,
    detail: String,
    mark_duplicate: bool,
) -> Result<FileOutcome, StoreError> {
    transition(
        file,
        FileState::Exception(reason),
        ctx.folders,
        &ctx.stores.catalog,
    )?;
    ctx.stores
        .catalog
        .lock()
        .expect("catalog lock")
        .update_entry(
            file.sr_num,
            &EntryPatch {
                fil_status: Some(FileStatus::Incomplete),
                dup_file: if mark_duplicate { Some(true) } else { None },
                ..Default::default()
            },
        )?;
    let event = if mark_duplicate {
        NotifyEvent::Duplicate
    } else {
        NotifyEvent::Failure
    };
    let delivery = notify(
        &Notification::new(event, file.sr_num, &file.name, detail),
        ctx.sinks,
    );
    Ok(FileOutcome {
        sr_num: file.sr_num,
        fil_name: file.name.clone(),
        final_state: FileState::Exception(reason),
        rows: None,
        cols: None,
        rejects: 0,
        parse_warnings: 0,
        sink_failures: delivery.failures().count(),
    })
}
