#![no_main]

use funcmed::config::parse_model_config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = parse_model_config(text) {
            cfg.to_spec(300.0).unwrap();
        }
    }
});
