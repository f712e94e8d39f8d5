#![no_main]

use libfuzzer_sys::fuzz_target;
use trail_core::env::GridLayout;

fuzz_target!(|data: &str| {
    if let Ok(layout) = GridLayout::from_text(data) {
        let _ = layout.check_connected();
        assert_eq!(GridLayout::from_text(&layout.to_text()).unwrap(), layout);
    }
});
