#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let once = stmtclass::normalize::renormalize(data);
    let twice = stmtclass::normalize::renormalize(&once.serialize());
    assert_eq!(once.serialize(), twice.serialize());
});
