#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = stmtclass::ingest::parse_document("fuzz", data);
});
