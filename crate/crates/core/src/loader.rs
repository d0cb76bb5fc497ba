//! Threshold-batched loading of parsed records into the generic table.
//!
//! Records narrower than the file's column count are padded with nulls;
//! records wider than it are quarantined (counted, never loaded) so a
//! ragged row can't shift columns silently. Batches flush automatically at
//! the configured threshold and per-file atomicity comes from the table's
//! pending-marker protocol: until `finalize` runs, an abort (or a crash)
//! erases everything the file contributed.

use std::sync::Mutex;

use thiserror::Error;

use crate::csv::{Field, Record};
use crate::table::{GenericTable, TableError};

#[derive(Debug, Error)]
pub enum LoaderError {
    #[error("record has {found} fields, more than the table width {width}")]
    TooManyColumns { found: usize, width: u32 },
    #[error(transparent)]
    Store(#[from] TableError),
}

/// Column count for a file, taken from its first record (the header when
/// one is present, otherwise the first data record).
pub fn detect_column_count(first_record: &Record, table_width: u32) -> Result<u32, LoaderError> {
    let found = first_record.fields.len();
    if found > table_width as usize {
        return Err(LoaderError::TooManyColumns {
            found,
            width: table_width,
        });
    }
    Ok(found as u32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadResult {
    pub rows_loaded: u64,
    pub col_num: u32,
    pub rejects: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordFate {
    Buffered,
    Quarantined,
}

/// Accumulates normalized rows for one file and flushes them in bounded
/// batches. One buffer per file; never shared.
pub struct BatchBuffer {
    capacity: usize,
    col_num: u32,
    source_sr: u64,
    pending: Vec<Vec<Option<String>>>,
    flush_count: u64,
    rows_loaded: u64,
    rejects: u64,
    started: bool,
}

impl BatchBuffer {
    pub fn new(capacity: usize, col_num: u32, source_sr: u64) -> Self {
        assert!(capacity >= 1, "batch threshold must be at least 1");
        BatchBuffer {
            capacity,
            col_num,
            source_sr,
            pending: Vec::with_capacity(capacity.min(4096)),
            flush_count: 0,
            rows_loaded: 0,
            rejects: 0,
            started: false,
        }
    }

    /// Buffers one data record, flushing automatically when the batch
    /// reaches capacity. Over-wide records are quarantined instead.
    pub fn push(
        &mut self,
        table: &Mutex<GenericTable>,
        record: Record,
    ) -> Result<RecordFate, LoaderError> {
        if record.fields.len() > self.col_num as usize {
            self.rejects += 1;
            return Ok(RecordFate::Quarantined);
        }
        let mut cells: Vec<Option<String>> = record
            .fields
            .into_iter()
            .map(|f| match f {
                Field::Present(text) => Some(text),
                Field::Absent => None,
            })
            .collect();
        cells.resize(self.col_num as usize, None);
        self.pending.push(cells);
        self.rows_loaded += 1;
        if self.pending.len() >= self.capacity {
            self.flush(table)?;
        }
        Ok(RecordFate::Buffered)
    }

    /// Durably appends everything pending. A no-op when nothing is pending,
    /// so the flush count always equals ceil(rows / threshold).
    pub fn flush(&mut self, table: &Mutex<GenericTable>) -> Result<(), LoaderError> {
        if self.pending.is_empty() {
            return Ok(());
        }
        let batch = std::mem::take(&mut self.pending);
        let mut table = table.lock().expect("table lock");
        if !self.started {
            table.start_file(self.source_sr)?;
            self.started = true;
        }
        table.append_batch(self.source_sr, batch)?;
        self.flush_count += 1;
        Ok(())
    }

    /// Flushes the residue and seals the file's rows into the table. The
    /// buffer is left empty; its counters remain readable.
    pub fn finalize(&mut self, table: &Mutex<GenericTable>) -> Result<LoadResult, LoaderError> {
        self.flush(table)?;
        if self.started {
            table.lock().expect("table lock").finish_file(self.source_sr)?;
        }
        Ok(LoadResult {
            rows_loaded: self.rows_loaded,
            col_num: self.col_num,
            rejects: self.rejects,
        })
    }

    /// Removes every row this file contributed, flushed or not.
    pub fn abort(&mut self, table: &Mutex<GenericTable>) -> Result<(), LoaderError> {
        self.pending.clear();
        if self.started {
            table.lock().expect("table lock").abort_file(self.source_sr)?;
        }
        Ok(())
    }

    pub fn flush_count(&self) -> u64 {
        self.flush_count
    }

    pub fn rows_loaded(&self) -> u64 {
        self.rows_loaded
    }

    pub fn rejects(&self) -> u64 {
        self.rejects
    }
}
