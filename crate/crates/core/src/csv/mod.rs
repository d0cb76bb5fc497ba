//! Streaming tokenizer and canonical writer for comma-separated records.
//!
//! The tokenizer pulls records one at a time from any [`std::io::Read`]
//! source, so memory use is bounded by the longest record rather than the
//! file size. Quoted fields may contain the delimiter, doubled-quote
//! escapes, and (by default) embedded line breaks. The canonical writer is
//! the inverse: its output parses back to the same records byte-for-byte.

mod reader;
mod writer;

pub use reader::{open_record_stream, RecordStream};
pub use writer::{write_canonical, write_record};

use thiserror::Error;

/// One parsed cell: either present text or absent.
///
/// An empty value is always `Absent`; `Present` never carries an empty
/// string. Quoted-empty (`""`) and unquoted-empty tokens both decode to
/// `Absent`. Use [`Field::from_text`] to keep that collapse when building
/// fields by hand.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Field {
    Present(String),
    Absent,
}

impl Field {
    /// Builds a field from raw text, mapping the empty string to `Absent`.
    pub fn from_text(text: impl Into<String>) -> Self {
        let text = text.into();
        if text.is_empty() {
            Field::Absent
        } else {
            Field::Present(text)
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Field::Present(text) => Some(text),
            Field::Absent => None,
        }
    }

    pub fn is_absent(&self) -> bool {
        matches!(self, Field::Absent)
    }
}

/// One parsed row of cells.
///
/// `source_line` is the 1-based physical line the record started on; records
/// with embedded line breaks advance the counter for everything that
/// follows. The tokenizer never emits a record with zero fields: a blank
/// physical line outside quotes emits nothing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub fields: Vec<Field>,
    pub source_line: u64,
}

impl Record {
    pub fn new(fields: Vec<Field>, source_line: u64) -> Self {
        Record { fields, source_line }
    }
}

/// Tokenizer tunables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseProfile {
    delimiter: u8,
    pub allow_quoted_newlines: bool,
}

impl ParseProfile {
    /// `delimiter` must be a printable ASCII character other than the quote
    /// character and the line terminators.
    pub fn new(delimiter: char, allow_quoted_newlines: bool) -> Result<Self, InvalidDelimiter> {
        if !delimiter.is_ascii() || matches!(delimiter, '"' | '\r' | '\n') {
            return Err(InvalidDelimiter(delimiter));
        }
        Ok(ParseProfile {
            delimiter: delimiter as u8,
            allow_quoted_newlines,
        })
    }

    pub fn delimiter(&self) -> char {
        self.delimiter as char
    }

    pub(crate) fn delimiter_byte(&self) -> u8 {
        self.delimiter
    }
}

impl Default for ParseProfile {
    fn default() -> Self {
        ParseProfile {
            delimiter: b',',
            allow_quoted_newlines: true,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid delimiter {0:?}: must be ASCII and not the quote or a line terminator")]
pub struct InvalidDelimiter(pub char);

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("invalid UTF-8 at byte offset {offset}")]
    Encoding { offset: u64 },
    #[error("unterminated quote in field opened on line {line}")]
    UnterminatedQuote { line: u64 },
    #[error("line break inside quoted field on line {line}")]
    QuotedNewlineForbidden { line: u64 },
    #[error("read failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Non-fatal oddity noticed while decoding a record. The offending field is
/// decoded verbatim and parsing continues.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseWarning {
    pub line: u64,
    pub kind: WarningKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarningKind {
    /// A quote character appeared inside an unquoted token.
    StrayQuote,
    /// Text continued after the closing quote of a quoted token.
    TextAfterClosingQuote,
}

impl std::fmt::Display for ParseWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            WarningKind::StrayQuote => {
                write!(f, "line {}: stray quote inside unquoted field", self.line)
            }
            WarningKind::TextAfterClosingQuote => {
                write!(f, "line {}: text after closing quote", self.line)
            }
        }
    }
}
