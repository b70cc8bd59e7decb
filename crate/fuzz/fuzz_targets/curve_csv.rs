#![no_main]

use libfuzzer_sys::fuzz_target;
use svfkit::io::{curve_to_csv, parse_curve_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let Ok(((a, b), samples)) = parse_curve_csv(s) else { return };
    let text = curve_to_csv((&a, &b), &samples);
    let (_, back) = parse_curve_csv(&text).expect("printed curve must parse");
    assert_eq!(back.len(), samples.len());
});
