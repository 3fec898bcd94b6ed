#![no_main]

use cxrbench::kb::store::{decode, encode};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(kb) = decode(data) {
        let again = decode(&encode(&kb)).expect("re-encoded knowledge base decodes");
        assert_eq!(again.len(), kb.len());
        assert_eq!(again.dim(), kb.dim());
    }
});
