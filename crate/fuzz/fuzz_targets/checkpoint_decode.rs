#![no_main]

use libfuzzer_sys::fuzz_target;
use pltr::checkpoint::{decode, encode};

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = decode(data) {
        assert_eq!(encode(&ckpt).unwrap(), data);
        let x = vec![0.5; ckpt.dim()];
        let _ = ckpt.predict(&x);
    }
});
