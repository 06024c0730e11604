#![no_main]

use drt_core::smoothing::{parse_records_csv, records_to_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = parse_records_csv(data) {
        let again = parse_records_csv(records_to_csv(&records).as_bytes()).expect("re-parse");
        assert_eq!(records.len(), again.len());
    }
});
