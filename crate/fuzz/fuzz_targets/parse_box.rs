#![no_main]

use libfuzzer_sys::fuzz_target;
use srisk::config::parse_box;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        for d in 1..=4usize {
            if let Ok(b) = parse_box(text, d) {
                // A parsed box must accept its own lower corner.
                let lo = b.lo.clone();
                assert!(b.contains(&lo, 0.0));
            }
        }
    }
});
