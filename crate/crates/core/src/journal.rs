//! Append-only JSON-lines journal with durable appends.
//!
//! Each line is one serialized value. A crash can leave a partial final
//! line; `open` truncates such a tail so later appends start clean. Lines
//! before the tail that fail to deserialize indicate real corruption and
//! surface as errors to the caller.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

pub(crate) struct Journal {
    file: File,
}

impl Journal {
    /// Opens (creating if needed) the journal and returns the complete lines
    /// currently in it.
    pub(crate) fn open(path: &Path) -> io::Result<(Journal, Vec<String>)> {
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .open(path)?;
        let mut raw = String::new();
        file.read_to_string(&mut raw)?;

        let mut lines: Vec<String> = Vec::new();
        let mut consumed = 0usize;
        for line in raw.split_inclusive('\n') {
            if line.ends_with('\n') {
                consumed += line.len();
                let trimmed = line.trim_end_matches(['\n', '\r']);
                if !trimmed.is_empty() {
                    lines.push(trimmed.to_string());
                }
            }
        }
        if consumed < raw.len() {
            // Partial tail from an interrupted append; discard it.
            file.set_len(consumed as u64)?;
        }
        file.seek(SeekFrom::End(0))?;
        Ok((Journal { file }, lines))
    }

    /// Appends one value as a JSON line and syncs it to disk.
    pub(crate) fn append<T: Serialize>(&mut self, value: &T) -> io::Result<()> {
        let mut line = serde_json::to_vec(value)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()
    }
}

/// Deserializes every journal line, reporting the first bad one.
pub(crate) fn parse_lines<T: DeserializeOwned>(
    lines: &[String],
    path: &Path,
) -> io::Result<Vec<T>> {
    lines
        .iter()
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| {
                io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("{} line {}: {}", path.display(), i + 1, e),
                )
            })
        })
        .collect()
}
