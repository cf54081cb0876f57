#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(root) = stmtclass::html::parse(data) {
        let _ = root.text_content();
    }
    let _ = stmtclass::html::decode_entities(data);
});
