#![no_main]

use libfuzzer_sys::fuzz_target;
use trail_core::nn::Checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = Checkpoint::decode(data) {
        assert_eq!(Checkpoint::decode(&ckpt.encode()).unwrap().encode(), ckpt.encode());
    }
});
