#![no_main]

use libfuzzer_sys::fuzz_target;
use srisk::config::parse_sigma;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        for d in 1..=4usize {
            if let Ok(rows) = parse_sigma(text, d) {
                assert_eq!(rows.len(), d);
                assert!(rows.iter().all(|r| r.len() == d));
            }
        }
    }
});
