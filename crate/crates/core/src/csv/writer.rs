use std::io::{self, Write};

use super::{Field, Record};

/// Writes one record in canonical form: comma-delimited, minimal quoting
/// (only fields containing a comma, quote, CR, or LF are quoted, with
/// internal quotes doubled), `Absent` as the empty token, CRLF terminator.
///
/// A record whose only field is `Absent` is written as `""`: the bare empty
/// token would render a blank line, which parses back to nothing.
///
/// Records must have at least one field; a zero-field record would render as
/// a blank line, which parses back to nothing.
pub fn write_record<W: Write>(out: &mut W, fields: &[Field]) -> io::Result<()> {
    debug_assert!(!fields.is_empty(), "records have at least one field");
    if fields.len() == 1 && fields[0].is_absent() {
        return out.write_all(b"\"\"\r\n");
    }
    for (i, field) in fields.iter().enumerate() {
        if i > 0 {
            out.write_all(b",")?;
        }
        if let Field::Present(text) = field {
            write_field(out, text)?;
        }
    }
    out.write_all(b"\r\n")
}

/// Serializes records to canonical bytes. Parsing the result with the
/// default profile reproduces the input exactly.
pub fn write_canonical(records: &[Record]) -> Vec<u8> {
    let mut bytes = Vec::new();
    for record in records {
        write_record(&mut bytes, &record.fields).expect("writing to Vec cannot fail");
    }
    bytes
}

fn write_field<W: Write>(out: &mut W, text: &str) -> io::Result<()> {
    if !needs_quoting(text) {
        return out.write_all(text.as_bytes());
    }
    out.write_all(b"\"")?;
    let bytes = text.as_bytes();
    let mut start = 0;
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'"' {
            // Include the quote, then double it.
            out.write_all(&bytes[start..=i])?;
            out.write_all(b"\"")?;
            start = i + 1;
        }
    }
    out.write_all(&bytes[start..])?;
    out.write_all(b"\"")
}

fn needs_quoting(text: &str) -> bool {
    text.bytes()
        .any(|b| matches!(b, b',' | b'"' | b'\r' | b'\n'))
}
