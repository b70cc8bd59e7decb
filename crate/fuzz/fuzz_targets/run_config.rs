#![no_main]

use libfuzzer_sys::fuzz_target;
use svfkit::config::RunOptions;
use svfkit::run::problem;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let Ok(opts) = RunOptions::from_toml_str(s) else { return };
    // a resolved config must describe a buildable problem or be rejected
    if let Ok(cfg) = opts.resolve() {
        if cfg.scenario.is_satellite() || cfg.shelf.is_some() {
            let _ = problem(&cfg);
        }
    }
});
