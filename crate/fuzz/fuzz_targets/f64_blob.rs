#![no_main]

use libfuzzer_sys::fuzz_target;
use sasd::io::{encode_f64_blob, parse_f64_blob};

fuzz_target!(|data: &[u8]| {
    if let Ok(values) = parse_f64_blob(data) {
        assert_eq!(values.len() * 8, data.len());
        assert_eq!(encode_f64_blob(&values), data);
    }
});
