#![no_main]

use libfuzzer_sys::fuzz_target;
use trail_core::env::parse_queries_csv;

fuzz_target!(|data: &str| {
    for dim in 1..4 {
        if let Ok(qs) = parse_queries_csv(data, dim) {
            assert!(qs.iter().all(|q| q.start.len() == dim && q.goal.len() == dim));
        }
    }
});
