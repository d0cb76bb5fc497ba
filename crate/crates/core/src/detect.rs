//! Pre-parse gatekeeping: header presence detection, duplicate-file
//! detection against a persistent reference store, and critical-column
//! validation.
//!
//! Duplicate detection works on content, not names: the first up-to-ten
//! data records are serialized canonically and hashed, and two files with
//! byte-equal samples are considered the same submission. The sample is
//! confirmed byte-for-byte on lookup, so a hash collision can never flag a
//! distinct file.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::csv::{write_canonical, Field, Record};
use crate::journal::{parse_lines, Journal};

/// How many leading data records feed the fingerprint and the
/// critical-column check.
pub const SAMPLE_ROWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeaderStatus {
    #[serde(rename = "PRESENT")]
    Present,
    #[serde(rename = "NOT PRESENT")]
    NotPresent,
}

impl std::fmt::Display for HeaderStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HeaderStatus::Present => f.write_str("PRESENT"),
            HeaderStatus::NotPresent => f.write_str("NOT PRESENT"),
        }
    }
}

/// A first record is a header only when every field is present and none of
/// them reads as a bare number. Currency and other decorated values
/// (`$582.62`, `($589.00)`) do not count as numeric; `5895`, `-3.2`, `5.`
/// and `.5` do.
pub fn detect_header(first_record: &Record) -> HeaderStatus {
    let is_header = first_record.fields.iter().all(|field| match field {
        Field::Present(text) => !is_numeric_token(text),
        Field::Absent => false,
    });
    if is_header {
        HeaderStatus::Present
    } else {
        HeaderStatus::NotPresent
    }
}

/// Bare numeric form: optional sign, ASCII digits, at most one decimal
/// point, at least one digit, surrounding spaces ignored.
fn is_numeric_token(text: &str) -> bool {
    let trimmed = text.trim_matches(' ');
    let mut bytes = trimmed.bytes().peekable();
    if matches!(bytes.peek(), Some(b'+') | Some(b'-')) {
        bytes.next();
    }
    let mut digits = 0usize;
    let mut dots = 0usize;
    for b in bytes {
        match b {
            b'0'..=b'9' => digits += 1,
            b'.' => {
                dots += 1;
                if dots > 1 {
                    return false;
                }
            }
            _ => return false,
        }
    }
    digits > 0
}

/// Canonical serialization and hash of a file's first up-to-ten data rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fingerprint {
    canonical_sample: Vec<u8>,
    digest: [u8; 32],
    sampled_rows: usize,
}

impl Fingerprint {
    pub fn canonical_sample(&self) -> &[u8] {
        &self.canonical_sample
    }

    pub fn digest(&self) -> &[u8; 32] {
        &self.digest
    }

    pub fn digest_hex(&self) -> String {
        hex::encode(self.digest)
    }

    pub fn sampled_rows(&self) -> usize {
        self.sampled_rows
    }
}

/// Fingerprints the leading data records (header already excluded by the
/// caller). More than [`SAMPLE_ROWS`] records are ignored; zero records
/// fingerprint the empty sample.
pub fn fingerprint_file(data_records: &[Record]) -> Fingerprint {
    let sample = &data_records[..data_records.len().min(SAMPLE_ROWS)];
    let canonical_sample = write_canonical(sample);
    let digest: [u8; 32] = Sha256::digest(&canonical_sample).into();
    Fingerprint {
        canonical_sample,
        digest,
        sampled_rows: sample.len(),
    }
}

/// Position of the column whose absence marks a file as erroneous.
/// 1-based; `None` disables the check.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CriticalRule {
    pub column_index: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticalOutcome {
    Ok,
    /// 1-based ordinal of the first sampled data record with a missing or
    /// out-of-range critical field.
    Violation { record_ordinal: u64 },
}

pub fn validate_critical(data_records: &[Record], rule: &CriticalRule) -> CriticalOutcome {
    let Some(index) = rule.column_index else {
        return CriticalOutcome::Ok;
    };
    debug_assert!(index >= 1);
    let at = (index - 1) as usize;
    for (i, record) in data_records.iter().take(SAMPLE_ROWS).enumerate() {
        let missing = match record.fields.get(at) {
            None => true,
            Some(field) => field.is_absent(),
        };
        if missing {
            return CriticalOutcome::Violation {
                record_ordinal: (i + 1) as u64,
            };
        }
    }
    CriticalOutcome::Ok
}

#[derive(Debug, Error)]
pub enum RefStoreError {
    #[error("reference store unavailable: {0}")]
    Unavailable(#[from] std::io::Error),
    #[error("fingerprint already registered under digest {digest}")]
    DuplicateDigest { digest: String },
}

#[derive(Serialize, Deserialize)]
struct RefEntry {
    digest: String,
    sample: String,
    owner_sr: u64,
}

/// Persistent store of fingerprints of processed files, keyed by digest.
/// Registrations survive process restart.
pub struct ReferenceStore {
    journal: Journal,
    entries: HashMap<[u8; 32], (Vec<u8>, u64)>,
}

impl ReferenceStore {
    pub fn open(path: &Path) -> Result<Self, RefStoreError> {
        let (journal, lines) = Journal::open(path)?;
        let mut entries = HashMap::new();
        for entry in parse_lines::<RefEntry>(&lines, path)? {
            let digest = decode_digest(&entry.digest, path)?;
            entries.insert(digest, (entry.sample.into_bytes(), entry.owner_sr));
        }
        Ok(ReferenceStore { journal, entries })
    }

    /// True when a previously registered fingerprint has a byte-equal
    /// canonical sample. Read-only.
    pub fn check_duplicate(&self, fp: &Fingerprint) -> bool {
        match self.entries.get(fp.digest()) {
            Some((sample, _)) => sample == fp.canonical_sample(),
            None => false,
        }
    }

    /// Records a fingerprint under the owning log serial, durably.
    pub fn register(&mut self, fp: &Fingerprint, owner_sr: u64) -> Result<(), RefStoreError> {
        if self.entries.contains_key(fp.digest()) {
            return Err(RefStoreError::DuplicateDigest {
                digest: fp.digest_hex(),
            });
        }
        let sample = String::from_utf8(fp.canonical_sample().to_vec())
            .expect("canonical samples are UTF-8 by construction");
        self.journal.append(&RefEntry {
            digest: fp.digest_hex(),
            sample: sample.clone(),
            owner_sr,
        })?;
        self.entries
            .insert(*fp.digest(), (sample.into_bytes(), owner_sr));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn decode_digest(hex_digest: &str, path: &Path) -> Result<[u8; 32], RefStoreError> {
    let bytes = hex::decode(hex_digest).map_err(|e| {
        RefStoreError::Unavailable(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("{}: bad digest: {e}", path.display()),
        ))
    })?;
    bytes.try_into().map_err(|_| {
        RefStoreError::Unavailable(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("{}: digest has wrong length", path.display()),
        ))
    })
}
