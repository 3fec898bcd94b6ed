#![no_main]

use std::path::Path;

use cxrbench::harness::manifest::LabeledManifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = LabeledManifest::parse(text, Path::new("/data")) {
        let test = m.balanced_test_rows(None);
        assert!(test.len() <= m.rows().len());
    }
});
