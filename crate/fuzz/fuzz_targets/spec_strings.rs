#![no_main]

use libfuzzer_sys::fuzz_target;
use svfkit::config::{parse_grid, parse_sweep};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let _ = parse_grid(s);
    if let Ok(spec) = parse_sweep(s) {
        let c = spec.candidates();
        assert!(!c.is_empty());
        assert!(c.windows(2).all(|w| w[0] < w[1]));
    }
});
