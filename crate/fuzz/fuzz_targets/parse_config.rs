#![no_main]

use libfuzzer_sys::fuzz_target;
use srisk::config::Config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // Parsing must never panic; on success the typed getters must not
    // panic either, regardless of what the values look like.
    let Ok(cfg) = Config::parse_str(text) else {
        return;
    };
    let _ = cfg.get_f64("beta");
    let _ = cfg.get_usize("d");
    let _ = cfg.get_f64_list("mu");
    let _ = cfg.get_loss("loss");
    let _ = cfg.get_portfolio();
});
