#![no_main]
use libfuzzer_sys::fuzz_target;
use hyqsim::config::parse_trap_config;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(c) = parse_trap_config(s) {
            let _ = c.model();
        }
    }
});
