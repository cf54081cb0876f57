#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(cm) = stmtclass::eval::ConfusionMatrix::parse_csv(data) {
        let _ = cm.micro_f1();
        let _ = stmtclass::eval::propose_nests(&cm.row_normalize(), 0.3);
    }
});
