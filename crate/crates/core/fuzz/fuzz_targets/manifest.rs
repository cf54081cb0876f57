#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(m) = stmtclass::dataset::DatasetManifest::parse(data) {
        let _ = m.to_text();
    }
});
