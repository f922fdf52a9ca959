#![no_main]
use libfuzzer_sys::fuzz_target;
use hyqsim::circuit::Circuit;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        // Rebuilding from the serialized form must succeed for anything accepted.
        if let Ok(c) = Circuit::from_json(s) {
            Circuit::from_json(&c.to_json()).expect("serialized circuit parses");
        }
    }
});
