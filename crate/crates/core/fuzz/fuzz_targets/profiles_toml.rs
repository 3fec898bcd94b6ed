#![no_main]

use cxrbench::carbon::{footprint, ProfileSet};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(set) = ProfileSet::from_toml_str(text) {
        let back = ProfileSet::from_toml_str(&set.to_toml_string()).expect("serialised profiles reparse");
        assert_eq!(back, set);
        for p in &set.profiles {
            let _ = footprint(p, 1.0);
        }
    }
});
