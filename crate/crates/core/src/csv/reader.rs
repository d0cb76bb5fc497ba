use std::io::{BufRead, BufReader, Read};

use super::{Field, ParseError, ParseProfile, ParseWarning, Record, WarningKind};

const QUOTE: u8 = b'"';
const CR: u8 = b'\r';
const LF: u8 = b'\n';

/// Opens a pull-based record stream over `source`.
///
/// Records are decoded on demand; the stream holds only the record currently
/// being assembled, so peak memory tracks the longest record, not the input
/// length. Input must be UTF-8. Line terminators LF, CRLF, and lone CR all
/// end a record; a blank physical line outside quotes emits nothing.
pub fn open_record_stream<R: Read>(source: R, profile: ParseProfile) -> RecordStream<R> {
    RecordStream {
        src: BufReader::new(source),
        delimiter: profile.delimiter_byte(),
        allow_quoted_newlines: profile.allow_quoted_newlines,
        line: 1,
        offset: 0,
        skip_lf: false,
        finished: false,
        warnings: Vec::new(),
        utf8: Utf8State::new(),
    }
}

pub struct RecordStream<R: Read> {
    src: BufReader<R>,
    delimiter: u8,
    allow_quoted_newlines: bool,
    /// Physical line (1-based) the next byte belongs to.
    line: u64,
    /// Absolute offset of the next byte.
    offset: u64,
    /// The previous record ended with a bare CR; swallow one following LF.
    skip_lf: bool,
    finished: bool,
    warnings: Vec<ParseWarning>,
    utf8: Utf8State,
}

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    FieldStart,
    Unquoted,
    Quoted,
    /// Saw a quote inside a quoted field; next byte decides escape vs close.
    QuoteInQuoted,
    /// Tolerated text after a closing quote, decoded verbatim.
    Tail,
}

enum Step {
    Complete,
    Eof,
    Fail(ParseError),
}

impl<R: Read> RecordStream<R> {
    /// Warnings recorded so far (stray quotes and the like).
    pub fn warnings(&self) -> &[ParseWarning] {
        &self.warnings
    }

    pub fn take_warnings(&mut self) -> Vec<ParseWarning> {
        std::mem::take(&mut self.warnings)
    }

    fn next_record(&mut self) -> Result<Option<Record>, ParseError> {
        if self.finished {
            return Ok(None);
        }

        let mut fields: Vec<Field> = Vec::new();
        let mut buf: Vec<u8> = Vec::new();
        let mut mode = Mode::FieldStart;
        let mut started = false;
        let mut record_line = self.line;
        let mut quote_line = self.line;
        let mut quoted_cr = false;
        let mut field_warned = false;

        loop {
            let mut used = 0usize;
            let mut step: Option<Step> = None;

            let chunk = self.src.fill_buf()?;
            if chunk.is_empty() {
                step = Some(Step::Eof);
            } else {
                for &b in chunk {
                    used += 1;
                    let off = self.offset;
                    self.offset += 1;

                    if self.skip_lf {
                        self.skip_lf = false;
                        if b == LF {
                            continue;
                        }
                    }
                    if let Err(at) = self.utf8.feed(b, off) {
                        step = Some(Step::Fail(ParseError::Encoding { offset: at }));
                        break;
                    }

                    let in_quotes = mode == Mode::Quoted;
                    if !in_quotes && (b == CR || b == LF) {
                        if mode == Mode::QuoteInQuoted {
                            // The pending quote closed the field.
                            mode = Mode::FieldStart;
                        }
                        if b == CR {
                            self.skip_lf = true;
                        }
                        self.line += 1;
                        if started {
                            push_field(&mut fields, &mut buf)?;
                            step = Some(Step::Complete);
                            break;
                        }
                        // Blank line: nothing to emit, keep scanning.
                        record_line = self.line;
                        continue;
                    }

                    if !started {
                        started = true;
                        record_line = self.line;
                    }

                    match mode {
                        Mode::FieldStart => {
                            field_warned = false;
                            if b == QUOTE {
                                mode = Mode::Quoted;
                                quote_line = self.line;
                            } else if b == self.delimiter {
                                fields.push(Field::Absent);
                            } else {
                                buf.push(b);
                                mode = Mode::Unquoted;
                            }
                        }
                        Mode::Unquoted => {
                            if b == self.delimiter {
                                push_field(&mut fields, &mut buf)?;
                                mode = Mode::FieldStart;
                            } else {
                                if b == QUOTE && !field_warned {
                                    field_warned = true;
                                    self.warnings.push(ParseWarning {
                                        line: self.line,
                                        kind: WarningKind::StrayQuote,
                                    });
                                }
                                buf.push(b);
                            }
                        }
                        Mode::Quoted => {
                            if b == QUOTE {
                                mode = Mode::QuoteInQuoted;
                                quoted_cr = false;
                            } else if b == CR || b == LF {
                                if !self.allow_quoted_newlines {
                                    step = Some(Step::Fail(ParseError::QuotedNewlineForbidden {
                                        line: self.line,
                                    }));
                                    break;
                                }
                                if b == CR {
                                    self.line += 1;
                                    quoted_cr = true;
                                } else {
                                    if !quoted_cr {
                                        self.line += 1;
                                    }
                                    quoted_cr = false;
                                }
                                buf.push(b);
                            } else {
                                quoted_cr = false;
                                buf.push(b);
                            }
                        }
                        Mode::QuoteInQuoted => {
                            if b == QUOTE {
                                buf.push(QUOTE);
                                mode = Mode::Quoted;
                            } else if b == self.delimiter {
                                push_field(&mut fields, &mut buf)?;
                                mode = Mode::FieldStart;
                            } else {
                                mode = Mode::Tail;
                                self.warnings.push(ParseWarning {
                                    line: self.line,
                                    kind: WarningKind::TextAfterClosingQuote,
                                });
                                buf.push(b);
                            }
                        }
                        Mode::Tail => {
                            if b == self.delimiter {
                                push_field(&mut fields, &mut buf)?;
                                mode = Mode::FieldStart;
                            } else {
                                buf.push(b);
                            }
                        }
                    }
                }
            }

            self.src.consume(used);
            match step {
                None => continue,
                Some(Step::Complete) => {
                    return Ok(Some(Record::new(fields, record_line)));
                }
                Some(Step::Fail(e)) => {
                    self.finished = true;
                    return Err(e);
                }
                Some(Step::Eof) => {
                    self.finished = true;
                    if self.utf8.pending() {
                        return Err(ParseError::Encoding {
                            offset: self.utf8.seq_start,
                        });
                    }
                    if mode == Mode::Quoted {
                        return Err(ParseError::UnterminatedQuote { line: quote_line });
                    }
                    if started {
                        push_field(&mut fields, &mut buf)?;
                        return Ok(Some(Record::new(fields, record_line)));
                    }
                    return Ok(None);
                }
            }
        }
    }
}

fn push_field(fields: &mut Vec<Field>, buf: &mut Vec<u8>) -> Result<(), ParseError> {
    let bytes = std::mem::take(buf);
    // Every byte already went through the incremental validator and fields
    // only end on whole scalar values, so this cannot fail.
    let text = String::from_utf8(bytes).map_err(|e| ParseError::Encoding {
        offset: e.utf8_error().valid_up_to() as u64,
    })?;
    fields.push(Field::from_text(text));
    Ok(())
}

impl<R: Read> Iterator for RecordStream<R> {
    type Item = Result<Record, ParseError>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.next_record() {
            Ok(Some(record)) => Some(Ok(record)),
            Ok(None) => None,
            Err(e) => Some(Err(e)),
        }
    }
}

/// Incremental UTF-8 validation per RFC 3629: lead-byte ranges, continuation
/// counts, and the restricted second-byte windows that reject overlong forms
/// and surrogates.
struct Utf8State {
    need: u8,
    lower: u8,
    upper: u8,
    seq_start: u64,
}

impl Utf8State {
    fn new() -> Self {
        Utf8State {
            need: 0,
            lower: 0x80,
            upper: 0xBF,
            seq_start: 0,
        }
    }

    fn pending(&self) -> bool {
        self.need > 0
    }

    /// Feeds one byte at absolute `offset`; on failure returns the offset of
    /// the start of the invalid sequence.
    fn feed(&mut self, b: u8, offset: u64) -> Result<(), u64> {
        if self.need == 0 {
            match b {
                0x00..=0x7F => Ok(()),
                0xC2..=0xDF => {
                    self.begin(1, 0x80, 0xBF, offset);
                    Ok(())
                }
                0xE0 => {
                    self.begin(2, 0xA0, 0xBF, offset);
                    Ok(())
                }
                0xE1..=0xEC | 0xEE..=0xEF => {
                    self.begin(2, 0x80, 0xBF, offset);
                    Ok(())
                }
                0xED => {
                    self.begin(2, 0x80, 0x9F, offset);
                    Ok(())
                }
                0xF0 => {
                    self.begin(3, 0x90, 0xBF, offset);
                    Ok(())
                }
                0xF1..=0xF3 => {
                    self.begin(3, 0x80, 0xBF, offset);
                    Ok(())
                }
                0xF4 => {
                    self.begin(3, 0x80, 0x8F, offset);
                    Ok(())
                }
                _ => Err(offset),
            }
        } else if b < self.lower || b > self.upper {
            Err(self.seq_start)
        } else {
            self.need -= 1;
            self.lower = 0x80;
            self.upper = 0xBF;
            Ok(())
        }
    }

    fn begin(&mut self, need: u8, lower: u8, upper: u8, offset: u64) {
        self.need = need;
        self.lower = lower;
        self.upper = upper;
        self.seq_start = offset;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(bytes: &[u8]) -> Vec<Record> {
        open_record_stream(Cursor::new(bytes.to_vec()), ParseProfile::default())
            .collect::<Result<Vec<_>, _>>()
            .expect("clean parse")
    }

    fn present(t: &str) -> Field {
        Field::Present(t.to_string())
    }

    #[test]
    fn plain_record() {
        let records = parse(b"zzz,yyy,xxx");
        assert_eq!(
            records,
            vec![Record::new(vec![present("zzz"), present("yyy"), present("xxx")], 1)]
        );
    }

    #[test]
    fn quoted_embedded_crlf() {
        let records = parse(b"\"aaa\",\"b\r\nbb\",\"ccc\"\r\nzzz,yyy,xxx");
        assert_eq!(records.len(), 2);
        assert_eq!(
            records[0].fields,
            vec![present("aaa"), present("b\r\nbb"), present("ccc")]
        );
        assert_eq!(records[0].source_line, 1);
        assert_eq!(
            records[1].fields,
            vec![present("zzz"), present("yyy"), present("xxx")]
        );
        assert_eq!(records[1].source_line, 3);
    }

    #[test]
    fn empty_input_yields_nothing() {
        assert!(parse(b"").is_empty());
    }

    #[test]
    fn doubled_quote_escape() {
        let records = parse(b"a,\"x\"\"y\",z");
        assert_eq!(
            records,
            vec![Record::new(vec![present("a"), present("x\"y"), present("z")], 1)]
        );
    }

    #[test]
    fn quoted_empty_and_bare_empty_are_absent() {
        let records = parse(b"\"\",,x");
        assert_eq!(
            records,
            vec![Record::new(vec![Field::Absent, Field::Absent, present("x")], 1)]
        );
    }

    #[test]
    fn embedded_delimiter_preserved() {
        let records = parse(b"\"b,c\"");
        assert_eq!(records, vec![Record::new(vec![present("b,c")], 1)]);
    }

    #[test]
    fn mixed_quoted_and_unquoted_tokens() {
        let records = parse(b"5897,\"Alltel\",\"AG/HFGS/107648/000/AEN\",,$0.00");
        assert_eq!(
            records[0].fields,
            vec![
                present("5897"),
                present("Alltel"),
                present("AG/HFGS/107648/000/AEN"),
                Field::Absent,
                present("$0.00"),
            ]
        );
    }

    #[test]
    fn blank_lines_emit_no_records() {
        let records = parse(b"a\r\n\r\n\nb\r\n");
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].fields, vec![present("a")]);
        assert_eq!(records[1].fields, vec![present("b")]);
        assert_eq!(records[1].source_line, 4);
    }

    #[test]
    fn lone_cr_terminates_records() {
        let records = parse(b"a\rb\rc");
        assert_eq!(records.len(), 3);
        assert_eq!(records[2].source_line, 3);
    }

    #[test]
    fn trailing_delimiter_yields_trailing_absent() {
        let records = parse(b"a,\r\n");
        assert_eq!(
            records,
            vec![Record::new(vec![present("a"), Field::Absent], 1)]
        );
    }

    #[test]
    fn record_of_single_quoted_empty_is_emitted() {
        let records = parse(b"\"\"\r\n");
        assert_eq!(records, vec![Record::new(vec![Field::Absent], 1)]);
    }

    #[test]
    fn stray_quote_is_verbatim_with_warning() {
        let mut stream = open_record_stream(Cursor::new(b"a\"b,c".to_vec()), ParseProfile::default());
        let record = stream.next().unwrap().unwrap();
        assert_eq!(record.fields, vec![present("a\"b"), present("c")]);
        assert_eq!(stream.warnings().len(), 1);
        assert_eq!(stream.warnings()[0].kind, WarningKind::StrayQuote);
    }

    #[test]
    fn text_after_closing_quote_is_verbatim_with_warning() {
        let mut stream =
            open_record_stream(Cursor::new(b"\"ab\"cd,e".to_vec()), ParseProfile::default());
        let record = stream.next().unwrap().unwrap();
        assert_eq!(record.fields, vec![present("abcd"), present("e")]);
        assert_eq!(stream.warnings()[0].kind, WarningKind::TextAfterClosingQuote);
    }

    #[test]
    fn unterminated_quote_reports_opening_line() {
        let mut stream =
            open_record_stream(Cursor::new(b"a\r\n\"open".to_vec()), ParseProfile::default());
        stream.next().unwrap().unwrap();
        match stream.next().unwrap() {
            Err(ParseError::UnterminatedQuote { line }) => assert_eq!(line, 2),
            other => panic!("expected unterminated quote, got {other:?}"),
        }
        assert!(stream.next().is_none());
    }

    #[test]
    fn invalid_utf8_reports_offset() {
        // Offset 2 starts a two-byte sequence that is cut off by the delimiter.
        let mut stream =
            open_record_stream(Cursor::new(vec![b'a', b'b', 0xC3, b',', b'x']), ParseProfile::default());
        match stream.next().unwrap() {
            Err(ParseError::Encoding { offset }) => assert_eq!(offset, 2),
            other => panic!("expected encoding error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_lead_byte_reports_its_own_offset() {
        let mut stream =
            open_record_stream(Cursor::new(vec![b'a', 0xFF, b'b']), ParseProfile::default());
        match stream.next().unwrap() {
            Err(ParseError::Encoding { offset }) => assert_eq!(offset, 1),
            other => panic!("expected encoding error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_multibyte_at_eof_is_encoding_error() {
        let mut stream = open_record_stream(Cursor::new(vec![b'a', 0xE2, 0x82]), ParseProfile::default());
        match stream.next().unwrap() {
            Err(ParseError::Encoding { offset }) => assert_eq!(offset, 1),
            other => panic!("expected encoding error, got {other:?}"),
        }
    }

    #[test]
    fn multibyte_content_parses() {
        let records = parse("α,β語,\"γ,δ\"".as_bytes());
        assert_eq!(
            records[0].fields,
            vec![present("α"), present("β語"), present("γ,δ")]
        );
    }

    #[test]
    fn quoted_newline_forbidden_when_disabled() {
        let profile = ParseProfile::new(',', false).unwrap();
        let mut stream = open_record_stream(Cursor::new(b"\"a\nb\"".to_vec()), profile);
        match stream.next().unwrap() {
            Err(ParseError::QuotedNewlineForbidden { line }) => assert_eq!(line, 1),
            other => panic!("expected quoted-newline error, got {other:?}"),
        }
    }

    #[test]
    fn alternate_delimiter() {
        let profile = ParseProfile::new(';', true).unwrap();
        let records: Vec<Record> = open_record_stream(Cursor::new(b"a;b,c;d".to_vec()), profile)
            .collect::<Result<_, _>>()
            .unwrap();
        assert_eq!(
            records[0].fields,
            vec![present("a"), present("b,c"), present("d")]
        );
    }

    #[test]
    fn rejects_quote_as_delimiter() {
        assert!(ParseProfile::new('"', true).is_err());
    }

    #[test]
    fn source_lines_strictly_increase_across_blank_and_quoted_breaks() {
        let records = parse(b"a\r\n\r\n\"x\ny\"\r\nb\r\n");
        let lines: Vec<u64> = records.iter().map(|r| r.source_line).collect();
        assert_eq!(lines, vec![1, 3, 5]);
    }

    /// The stream must not slurp the source: after pulling one record from a
    /// large input, only a buffer's worth of bytes may have been requested.
    #[test]
    fn reads_incrementally() {
        use std::io::Read;

        struct Counting<R> {
            inner: R,
            served: std::rc::Rc<std::cell::Cell<usize>>,
        }
        impl<R: Read> Read for Counting<R> {
            fn read(&mut self, out: &mut [u8]) -> std::io::Result<usize> {
                let n = self.inner.read(out)?;
                self.served.set(self.served.get() + n);
                Ok(n)
            }
        }

        let mut big = Vec::new();
        for i in 0..200_000 {
            big.extend_from_slice(format!("row{i},value,value\r\n").as_bytes());
        }
        let total = big.len();
        let served = std::rc::Rc::new(std::cell::Cell::new(0usize));
        let src = Counting {
            inner: Cursor::new(big),
            served: served.clone(),
        };
        let mut stream = open_record_stream(src, ParseProfile::default());
        stream.next().unwrap().unwrap();
        assert!(served.get() < 64 * 1024, "served {} of {}", served.get(), total);
    }
}
