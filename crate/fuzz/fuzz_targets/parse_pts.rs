#![no_main]

use libfuzzer_sys::fuzz_target;
use nlpflow::dynamics::PtsState;
use nlpflow_cli::parse_pts;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(groups) = parse_pts(text) {
        let r = groups.iter().map(Vec::len).sum();
        let _ = PtsState::new(groups, r);
    }
});
