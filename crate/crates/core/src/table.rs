//! Persistent generic wide table: one shared destination for the parsed
//! rows of every file.
//!
//! Layout under the table directory:
//!   - `meta.json` — table width and the next row serial, rewritten
//!     atomically before each batch so serials are never reused;
//!   - `sr_<N>.csv` — the rows contributed by log serial N, in canonical
//!     CSV with columns ROW_ID, SOURCE_SR, COL1..COLW;
//!   - `sr_<N>.pending` — marker present while serial N is still loading.
//!
//! A marker without a matching finish means the load never completed;
//! opening the store deletes the segment, so an aborted or crashed load
//! contributes zero rows even across restarts.

use std::collections::BinaryHeap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::csv::{open_record_stream, write_record, Field, ParseProfile, Record};

#[derive(Debug, Error)]
pub enum TableError {
    #[error("generic table unavailable: {0}")]
    Unavailable(#[from] io::Error),
    #[error("generic table corrupt: {0}")]
    Corrupt(String),
    #[error("generic table was created with width {existing}, not {requested}")]
    WidthMismatch { existing: u32, requested: u32 },
}

/// One row of the wide table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenericRow {
    pub row_id: u64,
    pub source_sr: u64,
    /// Exactly `width` cells; trailing cells beyond the source file's column
    /// count are `None`.
    pub cells: Vec<Option<String>>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    width: u32,
    next_row_id: u64,
}

#[derive(Debug)]
pub struct GenericTable {
    dir: PathBuf,
    width: u32,
    next_row_id: u64,
}

impl GenericTable {
    /// Opens or creates the table, replaying pending-marker cleanup for any
    /// load that never finished.
    pub fn open(dir: &Path, width: u32) -> Result<Self, TableError> {
        fs::create_dir_all(dir)?;

        // Abort replay: a lingering marker means the segment is garbage.
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) == Some("pending") {
                let segment = path.with_extension("csv");
                remove_if_present(&segment)?;
                remove_if_present(&path)?;
            }
        }

        let meta_path = dir.join("meta.json");
        let (width, next_row_id) = if meta_path.exists() {
            let meta: Meta = serde_json::from_reader(File::open(&meta_path)?)
                .map_err(|e| TableError::Corrupt(format!("meta.json: {e}")))?;
            if meta.width != width {
                return Err(TableError::WidthMismatch {
                    existing: meta.width,
                    requested: width,
                });
            }
            (meta.width, meta.next_row_id)
        } else {
            write_meta(&meta_path, &Meta { width, next_row_id: 1 })?;
            (width, 1)
        };

        Ok(GenericTable {
            dir: dir.to_path_buf(),
            width,
            next_row_id,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    /// Marks serial `sr` as loading and truncates any stale segment.
    pub fn start_file(&mut self, sr: u64) -> Result<(), TableError> {
        File::create(self.pending_path(sr))?.sync_all()?;
        File::create(self.segment_path(sr))?;
        Ok(())
    }

    /// Appends one batch for `sr`, assigning row serials. Serials are
    /// reserved durably before the rows are written, so a crash in between
    /// leaves a gap, never a reuse.
    pub fn append_batch(&mut self, sr: u64, rows: Vec<Vec<Option<String>>>) -> Result<(), TableError> {
        if rows.is_empty() {
            return Ok(());
        }
        let first_id = self.next_row_id;
        self.next_row_id += rows.len() as u64;
        write_meta(
            &self.dir.join("meta.json"),
            &Meta {
                width: self.width,
                next_row_id: self.next_row_id,
            },
        )?;

        let file = OpenOptions::new().append(true).open(self.segment_path(sr))?;
        let mut out = BufWriter::new(file);
        let width = self.width as usize;
        let mut fields: Vec<Field> = Vec::with_capacity(width + 2);
        for (i, row) in rows.into_iter().enumerate() {
            fields.clear();
            fields.push(Field::Present((first_id + i as u64).to_string()));
            fields.push(Field::Present(sr.to_string()));
            let mut n = 0usize;
            for cell in row {
                fields.push(match cell {
                    Some(text) => Field::from_text(text),
                    None => Field::Absent,
                });
                n += 1;
            }
            while n < width {
                fields.push(Field::Absent);
                n += 1;
            }
            write_record(&mut out, &fields)?;
        }
        out.flush()?;
        out.into_inner()
            .map_err(|e| TableError::Unavailable(e.into_error()))?
            .sync_data()?;
        Ok(())
    }

    /// Removes the pending marker: the rows for `sr` are now permanent.
    pub fn finish_file(&mut self, sr: u64) -> Result<(), TableError> {
        remove_if_present(&self.pending_path(sr))?;
        Ok(())
    }

    /// Drops every row contributed by `sr`.
    pub fn abort_file(&mut self, sr: u64) -> Result<(), TableError> {
        remove_if_present(&self.segment_path(sr))?;
        remove_if_present(&self.pending_path(sr))?;
        Ok(())
    }

    pub fn row_count_for(&self, sr: u64) -> Result<u64, TableError> {
        let path = self.segment_path(sr);
        if !path.exists() {
            return Ok(0);
        }
        let mut count = 0u64;
        let mut reader = BufReader::new(File::open(&path)?);
        let mut line = Vec::new();
        loop {
            line.clear();
            // Cells never contain raw line breaks (the canonical writer
            // quotes them), except that quoted cells can: count only
            // terminators outside quotes by delegating to the parser when
            // quotes are present at all.
            let n = reader.read_until(b'\n', &mut line)?;
            if n == 0 {
                break;
            }
            if line.contains(&b'"') {
                return self.row_count_by_parse(&path);
            }
            count += 1;
        }
        Ok(count)
    }

    fn row_count_by_parse(&self, path: &Path) -> Result<u64, TableError> {
        let mut count = 0u64;
        for record in open_record_stream(BufReader::new(File::open(path)?), ParseProfile::default())
        {
            record.map_err(|e| TableError::Corrupt(format!("{}: {e}", path.display())))?;
            count += 1;
        }
        Ok(count)
    }

    /// All rows contributed by `sr`, in insertion order.
    pub fn rows_for(&self, sr: u64) -> Result<Vec<GenericRow>, TableError> {
        let path = self.segment_path(sr);
        if !path.exists() {
            return Ok(Vec::new());
        }
        let mut rows = Vec::new();
        for record in open_record_stream(BufReader::new(File::open(&path)?), ParseProfile::default())
        {
            let record = record.map_err(|e| TableError::Corrupt(format!("{}: {e}", path.display())))?;
            rows.push(self.decode_row(record, &path)?);
        }
        Ok(rows)
    }

    /// Serials that currently have a segment on disk.
    pub fn source_serials(&self) -> Result<Vec<u64>, TableError> {
        let mut serials = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("csv") {
                continue;
            }
            if let Some(name) = path.file_stem().and_then(|s| s.to_str()) {
                if let Some(sr) = name.strip_prefix("sr_").and_then(|n| n.parse().ok()) {
                    serials.push(sr);
                }
            }
        }
        serials.sort_unstable();
        Ok(serials)
    }

    /// Streams the whole table as canonical CSV, globally ordered by row
    /// serial via a k-way merge over the per-file segments.
    pub fn export_csv<W: Write>(&self, out: &mut W) -> Result<(), TableError> {
        let mut header: Vec<Field> = vec![
            Field::Present("ROW_ID".into()),
            Field::Present("SOURCE_SR".into()),
        ];
        for i in 1..=self.width {
            header.push(Field::Present(format!("COL{i}")));
        }
        write_record(out, &header)?;

        struct Head {
            row_id: u64,
            record: Record,
            source: usize,
        }
        impl PartialEq for Head {
            fn eq(&self, other: &Self) -> bool {
                self.row_id == other.row_id
            }
        }
        impl Eq for Head {}
        impl PartialOrd for Head {
            fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
                Some(self.cmp(other))
            }
        }
        impl Ord for Head {
            fn cmp(&self, other: &Self) -> std::cmp::Ordering {
                // Min-heap on row_id.
                other.row_id.cmp(&self.row_id)
            }
        }

        let mut streams = Vec::new();
        for sr in self.source_serials()? {
            let path = self.segment_path(sr);
            streams.push((
                path.clone(),
                open_record_stream(BufReader::new(File::open(&path)?), ParseProfile::default()),
            ));
        }
        let mut heap = BinaryHeap::new();
        for (i, (path, stream)) in streams.iter_mut().enumerate() {
            if let Some(record) = stream.next() {
                let record = record.map_err(|e| TableError::Corrupt(format!("{}: {e}", path.display())))?;
                heap.push(Head {
                    row_id: row_id_of(&record, path)?,
                    record,
                    source: i,
                });
            }
        }
        while let Some(head) = heap.pop() {
            write_record(out, &head.record.fields)?;
            let (path, stream) = &mut streams[head.source];
            if let Some(record) = stream.next() {
                let record = record.map_err(|e| TableError::Corrupt(format!("{}: {e}", path.display())))?;
                heap.push(Head {
                    row_id: row_id_of(&record, path)?,
                    record,
                    source: head.source,
                });
            }
        }
        Ok(())
    }

    fn decode_row(&self, record: Record, path: &Path) -> Result<GenericRow, TableError> {
        let expected = self.width as usize + 2;
        if record.fields.len() != expected {
            return Err(TableError::Corrupt(format!(
                "{}: row has {} fields, expected {}",
                path.display(),
                record.fields.len(),
                expected
            )));
        }
        let row_id = row_id_of(&record, path)?;
        let source_sr = parse_serial(record.fields[1].as_text(), path)?;
        let cells = record
            .fields
            .into_iter()
            .skip(2)
            .map(|f| match f {
                Field::Present(text) => Some(text),
                Field::Absent => None,
            })
            .collect();
        Ok(GenericRow {
            row_id,
            source_sr,
            cells,
        })
    }

    fn segment_path(&self, sr: u64) -> PathBuf {
        self.dir.join(format!("sr_{sr}.csv"))
    }

    fn pending_path(&self, sr: u64) -> PathBuf {
        self.dir.join(format!("sr_{sr}.pending"))
    }
}

fn row_id_of(record: &Record, path: &Path) -> Result<u64, TableError> {
    parse_serial(record.fields.first().and_then(|f| f.as_text()), path)
}

fn parse_serial(text: Option<&str>, path: &Path) -> Result<u64, TableError> {
    text.and_then(|t| t.parse().ok()).ok_or_else(|| {
        TableError::Corrupt(format!("{}: bad serial cell", path.display()))
    })
}

fn write_meta(path: &Path, meta: &Meta) -> Result<(), TableError> {
    let tmp = path.with_extension("json.tmp");
    let mut file = File::create(&tmp)?;
    serde_json::to_writer(&mut file, meta)
        .map_err(|e| TableError::Corrupt(format!("meta serialize: {e}")))?;
    file.sync_data()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn remove_if_present(path: &Path) -> io::Result<()> {
    match fs::remove_file(path) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(()),
        Err(e) => Err(e),
    }
}
