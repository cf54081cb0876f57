#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(tax) = stmtclass::Taxonomy::parse(data) {
        for l in tax.labels() {
            let _ = tax.canonicalize_env(l.label.as_str());
            let _ = tax.nest_of(&l.label);
        }
    }
});
