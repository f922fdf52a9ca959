#![no_main]
use libfuzzer_sys::fuzz_target;
use hyqsim::config::parse_model_config;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(c) = parse_model_config(s) {
            let _ = c.params();
            let _ = c.initial_state();
        }
    }
});
