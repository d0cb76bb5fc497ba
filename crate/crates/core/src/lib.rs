//! Automated ingestion for comma-separated flat files.
//!
//! Files dropped in a source folder are swept through a fixed sequence:
//! intake into the audit log, size guard, header detection, duplicate and
//! critical-column checks against persistent stores, streaming parse with
//! threshold-batched loading into a generic wide table, and a final move to
//! `Archive` or `Exception`. Every step updates the per-file audit entry and
//! each terminal state emits one notification.
//!
//! The crate is organized around that flow:
//!
//! - [`csv`] — streaming tokenizer and canonical writer;
//! - [`detect`] — header, duplicate, and critical-column gatekeeping;
//! - [`workflow`] — folder state machine and moves;
//! - [`catalog`] — the audit log;
//! - [`loader`] / [`table`] — batched loading into the generic table;
//! - [`notify`] — terminal-state notifications;
//! - [`config`] — tunables;
//! - [`pipeline`] — the orchestrator.

pub mod catalog;
pub mod config;
pub mod csv;
pub mod detect;
mod journal;
pub mod loader;
pub mod notify;
pub mod pipeline;
pub mod table;
pub mod workflow;

// Timestamps appear throughout the public API.
pub use chrono;

pub use catalog::{Catalog, EntryFilter, EntryPatch, FileStatus, LogEntry};
pub use config::{load_config, ConfigOverrides, PipelineConfig, SinkSpec};
pub use csv::{open_record_stream, write_canonical, Field, ParseProfile, Record};
pub use detect::{detect_header, fingerprint_file, CriticalRule, Fingerprint, HeaderStatus};
pub use loader::{BatchBuffer, LoadResult};
pub use notify::{Notification, NotifyEvent};
pub use pipeline::{
    init_workspace, open_stores, run_pipeline, FileOutcome, PipelineFailure, RunReport, Stores,
};
pub use table::GenericTable;
pub use workflow::{ensure_folders, scan_source, ExceptionReason, FileState};
