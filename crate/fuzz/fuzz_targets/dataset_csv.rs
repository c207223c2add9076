#![no_main]

use libfuzzer_sys::fuzz_target;
use pltr::dataset::{parse_csv, LoadOptions};

fuzz_target!(|data: &[u8]| {
    for remap in [false, true] {
        for header in [false, true] {
            if let Ok(ds) = parse_csv(data, LoadOptions { remap, header }) {
                assert!(ds.features().as_slice().iter().all(|v| v.is_finite()));
                assert!(ds.labels().iter().all(|&y| y < ds.num_classes()));
            }
        }
    }
});
