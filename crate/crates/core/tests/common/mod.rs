//! Shared test helpers: a deliberately naive reference parser, input
//! generators, and fixture builders.
//!
//! `oracle_parse` is a character-at-a-time state machine over the whole
//! input string. It shares no code with the streaming tokenizer and exists
//! solely to check it.

#![allow(dead_code)]

use hopper_core::csv::{Field, Record};
use proptest::prelude::*;
use std::fmt::Write as _;

#[derive(Clone, Copy, PartialEq)]
enum OracleState {
    /// At the start of a field (also the start of a record when nothing has
    /// been seen yet on this line).
    FieldStart,
    Unquoted,
    Quoted,
    /// Saw a quote while inside a quoted field; the next character decides
    /// whether it was an escape or the closer.
    QuoteInQuoted,
}

/// Reference parser for strict grammar inputs (no stray quotes, no text
/// after a closing quote). Panics on input outside the strict grammar.
pub fn oracle_parse(input: &str) -> Vec<Record> {
    let mut records = Vec::new();
    let mut line: u64 = 1;

    let mut fields: Vec<Field> = Vec::new();
    let mut buf = String::new();
    let mut state = OracleState::FieldStart;
    let mut started = false;
    let mut record_line: u64 = 1;

    let mut chars = input.chars().peekable();
    while let Some(ch) = chars.next() {
        // Normalize CRLF to a single terminator up front; a lone CR or LF
        // also terminates. Inside quotes the raw characters are content.
        let in_quotes = state == OracleState::Quoted;
        if !in_quotes && (ch == '\r' || ch == '\n') {
            if ch == '\r' && chars.peek() == Some(&'\n') {
                chars.next();
            }
            line += 1;
            if started {
                fields.push(Field::from_text(std::mem::take(&mut buf)));
                records.push(Record::new(std::mem::take(&mut fields), record_line));
                started = false;
            }
            state = OracleState::FieldStart;
            continue;
        }
        if !started {
            started = true;
            record_line = line;
        }
        match state {
            OracleState::FieldStart => match ch {
                '"' => state = OracleState::Quoted,
                ',' => fields.push(Field::Absent),
                other => {
                    buf.push(other);
                    state = OracleState::Unquoted;
                }
            },
            OracleState::Unquoted => match ch {
                ',' => {
                    fields.push(Field::from_text(std::mem::take(&mut buf)));
                    state = OracleState::FieldStart;
                }
                '"' => panic!("oracle: stray quote is outside the strict grammar"),
                other => buf.push(other),
            },
            OracleState::Quoted => match ch {
                '"' => state = OracleState::QuoteInQuoted,
                other => {
                    if other == '\r' && chars.peek() == Some(&'\n') {
                        buf.push('\r');
                        buf.push('\n');
                        chars.next();
                        line += 1;
                    } else {
                        if other == '\r' || other == '\n' {
                            line += 1;
                        }
                        buf.push(other);
                    }
                }
            },
            OracleState::QuoteInQuoted => match ch {
                '"' => {
                    buf.push('"');
                    state = OracleState::Quoted;
                }
                ',' => {
                    fields.push(Field::from_text(std::mem::take(&mut buf)));
                    state = OracleState::FieldStart;
                }
                _ => panic!("oracle: text after closing quote is outside the strict grammar"),
            },
        }
    }
    if state == OracleState::Quoted {
        panic!("oracle: unterminated quote is outside the strict grammar");
    }
    if started {
        fields.push(Field::from_text(std::mem::take(&mut buf)));
        records.push(Record::new(fields, record_line));
    }
    records
}

// ---------------------------------------------------------------------------
// Generators

/// Field text mixing delimiters, quotes, CR/LF, and non-ASCII. Never empty;
/// empty cells are generated as `Absent` instead.
pub fn arb_field_text() -> impl Strategy<Value = String> {
    proptest::string::string_regex("[ -~Ωλ語\"\r\n,]{1,12}")
        .expect("valid regex")
        .prop_filter("non-empty", |s| !s.is_empty())
}

pub fn arb_field() -> impl Strategy<Value = Field> {
    prop_oneof![
        2 => arb_field_text().prop_map(Field::Present),
        1 => Just(Field::Absent),
    ]
}

/// Record lists shaped like the tokenizer would emit them: 1..=8 fields per
/// record, source lines consistent with canonical CRLF output (each record
/// starts one line after the previous one ended, embedded breaks included).
pub fn arb_records() -> impl Strategy<Value = Vec<Record>> {
    proptest::collection::vec(proptest::collection::vec(arb_field(), 1..=8), 0..=12).prop_map(
        |rows| {
            let mut line = 1u64;
            rows.into_iter()
                .map(|fields| {
                    let start = line;
                    for f in &fields {
                        if let Field::Present(t) = f {
                            line += embedded_breaks(t);
                        }
                    }
                    line += 1;
                    Record::new(fields, start)
                })
                .collect()
        },
    )
}

fn embedded_breaks(text: &str) -> u64 {
    let bytes = text.as_bytes();
    let mut n = 0;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'\r' => {
                n += 1;
                if bytes.get(i + 1) == Some(&b'\n') {
                    i += 1;
                }
            }
            b'\n' => n += 1,
            _ => {}
        }
        i += 1;
    }
    n
}

/// A strict-grammar CSV document assembled from raw tokens: per field either
/// an unquoted token (no structural characters) or a quoted token (anything,
/// with doubled quotes), records separated by a random terminator, optional
/// blank lines and optional missing final terminator.
pub fn arb_strict_csv_text() -> impl Strategy<Value = String> {
    let unquoted =
        proptest::string::string_regex("[a-zA-Z0-9 ./$()#+-]{0,10}").expect("valid regex");
    let quoted_content = proptest::string::string_regex("[ -~Ωλ\"\r\n,]{0,10}").expect("valid regex");
    let field = prop_oneof![
        3 => unquoted,
        2 => quoted_content.prop_map(|c| {
            let mut t = String::from("\"");
            for ch in c.chars() {
                if ch == '"' {
                    t.push_str("\"\"");
                } else {
                    t.push(ch);
                }
            }
            t.push('"');
            t
        }),
    ];
    let record = proptest::collection::vec(field, 1..=6).prop_map(|fs| fs.join(","));
    let terminator = prop_oneof![Just("\r\n"), Just("\n"), Just("\r")];
    (
        proptest::collection::vec((record, terminator, proptest::bool::weighted(0.15)), 0..=10),
        proptest::bool::weighted(0.5),
    )
        .prop_map(|(rows, trailing)| {
            let mut text = String::new();
            for (row, term, blank_after) in &rows {
                text.push_str(row);
                text.push_str(term);
                if *blank_after {
                    text.push_str(term);
                }
            }
            if !trailing {
                // Drop the final terminator half the time so the last record
                // ends at end of input.
                while text.ends_with('\n') || text.ends_with('\r') {
                    text.pop();
                }
            }
            text
        })
}

// ---------------------------------------------------------------------------
// Fixture builders

/// Writes `rows` as simple unquoted comma-joined lines terminated by CRLF.
pub fn simple_csv(rows: &[Vec<&str>]) -> Vec<u8> {
    let mut text = String::new();
    for row in rows {
        let _ = write!(text, "{}\r\n", row.join(","));
    }
    text.into_bytes()
}

/// Builds a headered file body: `cols` alphabetic column names, then
/// `rows` data rows of `cols` cells each, cell text derived from indices.
pub fn headered_file(cols: usize, rows: usize) -> Vec<u8> {
    let mut text = String::new();
    let names: Vec<String> = (0..cols).map(|c| format!("col {} name", letters(c))).collect();
    let _ = write!(text, "{}\r\n", names.join(","));
    for r in 0..rows {
        let cells: Vec<String> = (0..cols).map(|c| format!("r{}c{}", r + 1, c + 1)).collect();
        let _ = write!(text, "{}\r\n", cells.join(","));
    }
    text.into_bytes()
}

/// Builds a headerless file whose first cell of every row is numeric.
pub fn headerless_file(cols: usize, rows: usize) -> Vec<u8> {
    let mut text = String::new();
    for r in 0..rows {
        let mut cells: Vec<String> = vec![format!("{}", 1000 + r)];
        cells.extend((1..cols).map(|c| format!("v{}x{}", r + 1, c + 1)));
        let _ = write!(text, "{}\r\n", cells.join(","));
    }
    text.into_bytes()
}

fn letters(mut n: usize) -> String {
    let mut s = String::new();
    loop {
        s.push((b'a' + (n % 26) as u8) as char);
        n /= 26;
        if n == 0 {
            break;
        }
    }
    s
}
