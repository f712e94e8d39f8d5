#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    // anything that parses must survive its own snapshot
    if let Ok(cfg) = trail_cli::parse_config(data) {
        assert_eq!(trail_cli::parse_config(&cfg.to_text()).unwrap(), cfg);
    }
});
