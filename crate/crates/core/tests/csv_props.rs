//! Properties of the tokenizer/writer pair: canonical round-trips, field-
//! for-field agreement with the naive reference parser, and field-count
//! stability under quoting.

mod common;

use common::{arb_records, arb_strict_csv_text, oracle_parse};
use hopper_core::csv::{open_record_stream, write_canonical, ParseProfile, Record};
use proptest::prelude::*;
use std::io::Cursor;

fn parse_all(bytes: &[u8]) -> Vec<Record> {
    open_record_stream(Cursor::new(bytes.to_vec()), ParseProfile::default())
        .collect::<Result<Vec<_>, _>>()
        .expect("generated input parses cleanly")
}

proptest! {
    #[test]
    fn canonical_round_trip(records in arb_records()) {
        let bytes = write_canonical(&records);
        let reparsed = parse_all(&bytes);
        prop_assert_eq!(reparsed, records);
    }

    #[test]
    fn tokenizer_matches_oracle(text in arb_strict_csv_text()) {
        let streamed = parse_all(text.as_bytes());
        let reference = oracle_parse(&text);
        prop_assert_eq!(streamed, reference);
    }

    /// Quoted delimiters merge fields, never split them: per record the
    /// tokenizer's field count is bounded by one more than the raw
    /// delimiter count of the whole input.
    #[test]
    fn field_count_never_exceeds_raw_split(text in arb_strict_csv_text()) {
        let raw_commas = text.bytes().filter(|&b| b == b',').count();
        let records = parse_all(text.as_bytes());
        let total_fields: usize = records.iter().map(|r| r.fields.len()).sum();
        prop_assert!(total_fields <= raw_commas + records.len());
    }

    /// Writing the oracle's records and re-parsing them reproduces the
    /// records: the writer is a right inverse on anything parseable.
    #[test]
    fn writer_normalizes_any_parse(text in arb_strict_csv_text()) {
        let records = parse_all(text.as_bytes());
        let canonical = write_canonical(&records);
        let reparsed = parse_all(&canonical);
        prop_assert_eq!(reparsed.len(), records.len());
        for (a, b) in reparsed.iter().zip(records.iter()) {
            prop_assert_eq!(&a.fields, &b.fields);
        }
    }
}
