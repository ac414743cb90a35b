#![no_main]

use libfuzzer_sys::fuzz_target;
use nlpflow::problem::parse_expression;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(e) = parse_expression(text) {
        let theta = vec![0.25; e.max_var().map_or(0, |m| m + 1)];
        let (a, b) = (e.eval(&theta), e.eval_dual(&theta).value);
        assert!(
            a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()),
            "{a:?} vs {b:?}"
        );
    }
});
