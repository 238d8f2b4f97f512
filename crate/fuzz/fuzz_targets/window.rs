#![no_main]

use funcmed::quadrature::Window;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(w) = text.parse::<Window>() {
            assert!(w.delta() >= 0.0);
            let _ = w.steps(2.0);
        }
        let _ = serde_json::from_str::<Window>(text);
    }
});
