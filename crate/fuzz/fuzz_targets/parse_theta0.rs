#![no_main]

use libfuzzer_sys::fuzz_target;
use nlpflow_cli::parse_theta0;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_theta0(text);
    }
});
