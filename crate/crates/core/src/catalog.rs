//! Append-and-update audit log of every file ever presented.
//!
//! Backed by a JSON-lines journal: every mutation appends a full snapshot of
//! the entry, and the latest snapshot per serial wins on reload. Serials are
//! never reused, including across restarts.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::csv::{write_record, Field};
use crate::detect::HeaderStatus;
use crate::journal::{parse_lines, Journal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FileStatus {
    #[serde(rename = "IN_PROGRESS")]
    InProgress,
    #[serde(rename = "COMPLETE")]
    Complete,
    #[serde(rename = "INCOMPLETE")]
    Incomplete,
}

impl std::fmt::Display for FileStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FileStatus::InProgress => f.write_str("IN_PROGRESS"),
            FileStatus::Complete => f.write_str("COMPLETE"),
            FileStatus::Incomplete => f.write_str("INCOMPLETE"),
        }
    }
}

impl std::str::FromStr for FileStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "IN_PROGRESS" => Ok(FileStatus::InProgress),
            "COMPLETE" => Ok(FileStatus::Complete),
            "INCOMPLETE" => Ok(FileStatus::Incomplete),
            other => Err(format!("unknown status {other:?}")),
        }
    }
}

/// One audit-log row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub sr_num: u64,
    pub fil_type: String,
    pub fil_name: String,
    pub fil_path: String,
    pub fil_size: u64,
    /// `None` until the header check has run.
    pub header: Option<HeaderStatus>,
    pub fil_status: FileStatus,
    pub dup_file: bool,
    /// Data rows loaded, header excluded. Null until the file completes.
    pub rows_num: Option<u64>,
    pub col_num: Option<u32>,
    /// Quarantined ragged records.
    pub rejects_num: u64,
    pub created_at: DateTime<Utc>,
    pub modified_at: DateTime<Utc>,
}

impl LogEntry {
    pub fn header_label(&self) -> &'static str {
        match self.header {
            Some(HeaderStatus::Present) => "PRESENT",
            Some(HeaderStatus::NotPresent) => "NOT PRESENT",
            None => "UNKNOWN",
        }
    }

    pub fn dup_label(&self) -> &'static str {
        if self.dup_file {
            "Y"
        } else {
            "N"
        }
    }

    fn check_invariants(&self) -> Result<(), String> {
        if self.fil_status == FileStatus::Complete {
            if self.rows_num.is_none() || self.col_num.is_none() {
                return Err("COMPLETE entry must carry row and column counts".into());
            }
            if self.dup_file {
                return Err("COMPLETE entry cannot be a duplicate".into());
            }
        }
        if self.dup_file {
            if self.fil_status != FileStatus::Incomplete {
                return Err("duplicate entry must be INCOMPLETE".into());
            }
            if self.rows_num.is_some() || self.col_num.is_some() {
                return Err("duplicate entry must have null counts".into());
            }
        }
        if self.modified_at < self.created_at {
            return Err("modified_at must not precede created_at".into());
        }
        Ok(())
    }
}

/// Partial update for [`Catalog::update_entry`]; unset fields are untouched.
#[derive(Debug, Clone, Default)]
pub struct EntryPatch {
    pub fil_path: Option<String>,
    pub header: Option<HeaderStatus>,
    pub fil_status: Option<FileStatus>,
    pub dup_file: Option<bool>,
    pub rows_num: Option<u64>,
    pub col_num: Option<u32>,
    pub rejects_num: Option<u64>,
}

#[derive(Debug, Clone, Default)]
pub struct EntryFilter {
    pub status: Option<FileStatus>,
    pub dup_file: Option<bool>,
    pub name_substring: Option<String>,
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("catalog unavailable: {0}")]
    Unavailable(#[from] io::Error),
    #[error("no log entry with serial {0}")]
    UnknownSerial(u64),
    #[error("update rejected: {0}")]
    InvariantViolation(String),
}

pub struct Catalog {
    journal: Journal,
    entries: BTreeMap<u64, LogEntry>,
    next_sr: u64,
}

impl Catalog {
    pub fn open(path: &Path) -> Result<Self, CatalogError> {
        let (journal, lines) = Journal::open(path)?;
        let mut entries = BTreeMap::new();
        for entry in parse_lines::<LogEntry>(&lines, path)? {
            entries.insert(entry.sr_num, entry);
        }
        let next_sr = entries.keys().next_back().copied().unwrap_or(0) + 1;
        Ok(Catalog {
            journal,
            entries,
            next_sr,
        })
    }

    /// Opens a new entry in `IN_PROGRESS` state and returns its serial.
    /// Durable on return.
    pub fn append_entry(&mut self, name: &str, path: &str, size: u64) -> Result<u64, CatalogError> {
        let now = Utc::now();
        let entry = LogEntry {
            sr_num: self.next_sr,
            fil_type: "CSV".to_string(),
            fil_name: name.to_string(),
            fil_path: path.to_string(),
            fil_size: size,
            header: None,
            fil_status: FileStatus::InProgress,
            dup_file: false,
            rows_num: None,
            col_num: None,
            rejects_num: 0,
            created_at: now,
            modified_at: now,
        };
        self.journal.append(&entry)?;
        self.entries.insert(entry.sr_num, entry);
        self.next_sr += 1;
        Ok(self.next_sr - 1)
    }

    /// Applies a patch atomically: the update is validated against the entry
    /// invariants before anything is written.
    pub fn update_entry(&mut self, sr_num: u64, patch: &EntryPatch) -> Result<(), CatalogError> {
        let current = self
            .entries
            .get(&sr_num)
            .ok_or(CatalogError::UnknownSerial(sr_num))?;
        let mut updated = current.clone();
        if let Some(p) = &patch.fil_path {
            updated.fil_path = p.clone();
        }
        if let Some(h) = patch.header {
            updated.header = Some(h);
        }
        if let Some(s) = patch.fil_status {
            updated.fil_status = s;
        }
        if let Some(d) = patch.dup_file {
            updated.dup_file = d;
        }
        if let Some(r) = patch.rows_num {
            updated.rows_num = Some(r);
        }
        if let Some(c) = patch.col_num {
            updated.col_num = Some(c);
        }
        if let Some(q) = patch.rejects_num {
            updated.rejects_num = q;
        }
        updated.modified_at = Utc::now().max(updated.created_at);
        updated
            .check_invariants()
            .map_err(CatalogError::InvariantViolation)?;
        self.journal.append(&updated)?;
        self.entries.insert(sr_num, updated);
        Ok(())
    }

    pub fn get(&self, sr_num: u64) -> Result<&LogEntry, CatalogError> {
        self.entries
            .get(&sr_num)
            .ok_or(CatalogError::UnknownSerial(sr_num))
    }

    /// Matching entries in serial order; an empty filter returns everything.
    pub fn query(&self, filter: &EntryFilter) -> Vec<LogEntry> {
        self.entries
            .values()
            .filter(|e| {
                filter.status.map_or(true, |s| e.fil_status == s)
                    && filter.dup_file.map_or(true, |d| e.dup_file == d)
                    && filter
                        .name_substring
                        .as_deref()
                        .map_or(true, |n| e.fil_name.contains(n))
            })
            .cloned()
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Canonical CSV export: the audit columns in order, then REJECTS_NUM,
    /// CREATED_AT, MODIFIED_AT. Header flags, duplicate flags, and statuses
    /// use their exact serialized spellings.
    pub fn export_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let header: Vec<Field> = EXPORT_COLUMNS
            .iter()
            .map(|c| Field::Present(c.to_string()))
            .collect();
        write_record(out, &header)?;
        for entry in self.entries.values() {
            let fields = vec![
                Field::from_text(entry.sr_num.to_string()),
                Field::from_text(entry.fil_type.clone()),
                Field::from_text(entry.fil_name.clone()),
                Field::from_text(entry.fil_path.clone()),
                Field::from_text(entry.fil_size.to_string()),
                Field::from_text(entry.header_label()),
                Field::from_text(entry.fil_status.to_string()),
                Field::from_text(entry.dup_label()),
                count_field(entry.rows_num.map(|v| v.to_string())),
                count_field(entry.col_num.map(|v| v.to_string())),
                Field::from_text(entry.rejects_num.to_string()),
                Field::from_text(entry.created_at.to_rfc3339()),
                Field::from_text(entry.modified_at.to_rfc3339()),
            ];
            write_record(out, &fields)?;
        }
        Ok(())
    }
}

pub const EXPORT_COLUMNS: [&str; 13] = [
    "SR_NUM",
    "FIL_TYPE",
    "FIL_NAME",
    "FIL_PATH",
    "FIL_SIZE",
    "HEADER",
    "FIL_STATUS",
    "DUP_FILE",
    "ROWS_NUM",
    "COL_NUM",
    "REJECTS_NUM",
    "CREATED_AT",
    "MODIFIED_AT",
];

fn count_field(value: Option<String>) -> Field {
    match value {
        Some(v) => Field::Present(v),
        None => Field::Present("NULL".to_string()),
    }
}
