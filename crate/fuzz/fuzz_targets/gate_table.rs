#![no_main]
use libfuzzer_sys::fuzz_target;
use hyqsim::budget::GateBudgetTable;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = GateBudgetTable::from_json(s);
    }
});
