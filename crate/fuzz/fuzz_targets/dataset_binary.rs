#![no_main]

use libfuzzer_sys::fuzz_target;
use pltr::dataset::{decode_binary, encode_binary, LoadOptions};

fuzz_target!(|data: &[u8]| {
    for remap in [false, true] {
        if let Ok(ds) = decode_binary(data, LoadOptions { remap, header: false }) {
            let again = decode_binary(&encode_binary(&ds).unwrap(), LoadOptions::default()).unwrap();
            assert_eq!(again, ds);
        }
    }
});
