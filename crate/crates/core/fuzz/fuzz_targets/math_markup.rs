#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = stmtclass::math::lexemize_markup(data);
});
