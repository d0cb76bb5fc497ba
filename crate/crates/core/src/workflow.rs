//! Folder state machine: every managed file physically lives in the folder
//! matching its state, and moves between folders are the state transitions.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::catalog::{Catalog, CatalogError, EntryPatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExceptionReason {
    Duplicate,
    CriticalNull,
    TooLarge,
    ParseFailure,
    Encoding,
}

impl std::fmt::Display for ExceptionReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExceptionReason::Duplicate => f.write_str("DUPLICATE"),
            ExceptionReason::CriticalNull => f.write_str("CRITICAL_NULL"),
            ExceptionReason::TooLarge => f.write_str("TOO_LARGE"),
            ExceptionReason::ParseFailure => f.write_str("PARSE_FAILURE"),
            ExceptionReason::Encoding => f.write_str("ENCODING"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileState {
    Received,
    In,
    InProgress,
    Archived,
    Exception(ExceptionReason),
}

impl FileState {
    /// The legal transition set. Archived and Exception are terminal.
    pub fn can_transition_to(&self, to: FileState) -> bool {
        use ExceptionReason::*;
        use FileState::*;
        matches!(
            (self, to),
            (Received, In)
                | (Received, Exception(TooLarge))
                | (In, InProgress)
                | (In, Exception(Duplicate))
                | (In, Exception(CriticalNull))
                | (InProgress, Archived)
                | (InProgress, Exception(ParseFailure))
                | (InProgress, Exception(Encoding))
        )
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, FileState::Archived | FileState::Exception(_))
    }
}

impl std::fmt::Display for FileState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FileState::Received => f.write_str("RECEIVED"),
            FileState::In => f.write_str("IN"),
            FileState::InProgress => f.write_str("IN_PROGRESS"),
            FileState::Archived => f.write_str("ARCHIVED"),
            FileState::Exception(reason) => write!(f, "EXCEPTION({reason})"),
        }
    }
}

/// The four managed folders under one root. The source folder is separate
/// and never managed.
#[derive(Debug, Clone)]
pub struct FolderSet {
    pub root: PathBuf,
    pub incoming: PathBuf,
    pub in_progress: PathBuf,
    pub archive: PathBuf,
    pub exception: PathBuf,
}

impl FolderSet {
    pub fn dir_for(&self, state: FileState) -> Option<&Path> {
        match state {
            FileState::Received => None,
            FileState::In => Some(&self.incoming),
            FileState::InProgress => Some(&self.in_progress),
            FileState::Archived => Some(&self.archive),
            FileState::Exception(_) => Some(&self.exception),
        }
    }
}

/// Creates the managed folders if absent. Idempotent; existing contents are
/// untouched.
pub fn ensure_folders(root: &Path) -> io::Result<FolderSet> {
    let folders = FolderSet {
        root: root.to_path_buf(),
        incoming: root.join("In"),
        in_progress: root.join("InProgress"),
        archive: root.join("Archive"),
        exception: root.join("Exception"),
    };
    for dir in [
        &folders.root,
        &folders.incoming,
        &folders.in_progress,
        &folders.archive,
        &folders.exception,
    ] {
        fs::create_dir_all(dir)?;
    }
    Ok(folders)
}

/// Candidate files in the source folder: regular files with a `.csv`
/// extension (case-insensitive), name-sorted for a deterministic order.
pub fn scan_source(source_dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(source_dir)? {
        let entry = entry?;
        if !entry.file_type()?.is_file() {
            continue;
        }
        let path = entry.path();
        let is_csv = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        if is_csv {
            files.push(path);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeCheck {
    Ok,
    TooLarge,
}

/// Inclusive size guard: a file of exactly `max_bytes` passes.
pub fn guard_size(size_bytes: u64, max_bytes: u64) -> SizeCheck {
    if size_bytes <= max_bytes {
        SizeCheck::Ok
    } else {
        SizeCheck::TooLarge
    }
}

/// A file in flight through the folders.
#[derive(Debug, Clone)]
pub struct ManagedFile {
    pub sr_num: u64,
    pub name: String,
    pub current_path: PathBuf,
    pub size_bytes: u64,
    pub state: FileState,
}

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error("illegal transition {from} -> {to}")]
    IllegalTransition { from: FileState, to: FileState },
    #[error("move failed: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

/// Moves the file into the destination folder and records the new path in
/// the catalog as part of the same step. On a failed move the state and the
/// file are unchanged.
///
/// A name collision in the destination is resolved by suffixing the log
/// serial before the extension.
pub fn transition(
    file: &mut ManagedFile,
    to: FileState,
    folders: &FolderSet,
    catalog: &std::sync::Mutex<Catalog>,
) -> Result<(), WorkflowError> {
    if !file.state.can_transition_to(to) {
        return Err(WorkflowError::IllegalTransition {
            from: file.state,
            to,
        });
    }
    let dest_dir = folders
        .dir_for(to)
        .expect("every transition target has a folder");
    let mut dest = dest_dir.join(&file.name);
    if dest.exists() {
        dest = dest_dir.join(suffixed_name(&file.name, file.sr_num));
    }
    move_file(&file.current_path, &dest)?;
    catalog
        .lock()
        .expect("catalog lock")
        .update_entry(
            file.sr_num,
            &EntryPatch {
                fil_path: Some(dest.display().to_string()),
                ..Default::default()
            },
        )?;
    file.current_path = dest;
    file.state = to;
    Ok(())
}

fn suffixed_name(name: &str, sr_num: u64) -> String {
    match name.rsplit_once('.') {
        Some((stem, ext)) => format!("{stem}_sr{sr_num}.{ext}"),
        None => format!("{name}_sr{sr_num}"),
    }
}

/// Rename, falling back to copy-and-delete when source and destination live
/// on different filesystems.
fn move_file(from: &Path, to: &Path) -> io::Result<()> {
    match fs::rename(from, to) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == io::ErrorKind::CrossesDevices => {
            fs::copy(from, to)?;
            fs::remove_file(from)?;
            Ok(())
        }
        Err(e) => Err(e),
    }
}
