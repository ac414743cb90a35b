#![no_main]

use libfuzzer_sys::fuzz_target;
use nlpflow::problem::{parse_problem_text, NlpProblem};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(parsed) = parse_problem_text(text) else { return };
    // the canonical form must parse back to the same tree
    let again = parse_problem_text(&parsed.to_text()).expect("canonical text parses");
    assert_eq!(again, parsed);
    if parsed.n <= 64 {
        let problem = NlpProblem::from_expressions("fuzz", parsed);
        let _ = problem.evaluate(&nlpflow::linalg::Vector::from_element(problem.dims().n, 0.5));
    }
});
