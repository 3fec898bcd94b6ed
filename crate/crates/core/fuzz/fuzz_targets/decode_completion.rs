#![no_main]

use cxrbench::llm::decode_completion;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = decode_completion(text);
    }
});
