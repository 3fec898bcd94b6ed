#![no_main]

use std::path::Path;

use cxrbench::harness::config::RunFile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = RunFile::from_toml_str(text, Path::new("/runs"));
    }
});
