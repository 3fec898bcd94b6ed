#![no_main]

use cxrbench::llm::{interpret_response, parse_probabilities, Outcome};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(d) = parse_probabilities(text) {
        assert!((0.0..=1.0).contains(&d.p_positive));
        assert!((d.p_positive + d.p_negative - 1.0).abs() < 1e-9);
    }
    if let Outcome::Scored(d) = interpret_response(text) {
        assert!((0.0..=1.0).contains(&d.p_positive));
    }
});
