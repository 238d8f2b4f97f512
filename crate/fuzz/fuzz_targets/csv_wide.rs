#![no_main]

use funcmed::funcdata::FunctionalSample;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = FunctionalSample::read_csv_bytes(data) {
        let mut out = Vec::new();
        s.write_csv(&mut out).unwrap();
        let back = FunctionalSample::read_csv_bytes(&out).unwrap();
        assert_eq!(back.values(), s.values());
    }
});
