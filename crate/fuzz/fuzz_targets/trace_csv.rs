#![no_main]

use libfuzzer_sys::fuzz_target;
use pltr::analysis::{read_trace_csv, write_trace_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(trace) = read_trace_csv(data) {
        let mut out = Vec::new();
        write_trace_csv(&trace, &mut out).unwrap();
        assert_eq!(read_trace_csv(&out[..]).unwrap(), trace);
    }
});
