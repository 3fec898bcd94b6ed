#![no_main]

use cxrbench::harness::records::parse_jsonl;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok((_, valid_len)) = parse_jsonl(text) {
        assert!(valid_len <= text.len());
        assert!(text.is_char_boundary(valid_len));
    }
});
