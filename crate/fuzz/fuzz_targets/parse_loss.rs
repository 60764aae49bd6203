#![no_main]

use libfuzzer_sys::fuzz_target;
use srisk::config::parse_loss;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(loss) = parse_loss(text) {
            // A successfully parsed loss must be evaluable on its domain.
            let _ = loss.eval(0.5);
            let _ = loss.eval_derivative(-0.5);
        }
    }
});
