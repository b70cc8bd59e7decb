#![no_main]

use libfuzzer_sys::fuzz_target;
use svfkit::io::GridCsv;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let Ok(csv) = GridCsv::parse(s) else { return };
    // whatever parses must print back to something that parses the same
    let text = csv.to_csv_string();
    let again = GridCsv::parse(&text).expect("printed grid csv must parse");
    assert_eq!(again.to_csv_string(), text);
});
