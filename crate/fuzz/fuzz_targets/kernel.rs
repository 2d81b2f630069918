#![no_main]

use libfuzzer_sys::fuzz_target;
use sasd::io::parse_kernel;

// The first byte picks the format: odd for JSON, even for raw f64.
fuzz_target!(|data: &[u8]| {
    let Some((&mode, body)) = data.split_first() else { return };
    if let Ok(k) = parse_kernel(body, mode & 1 == 1) {
        assert!(!k.is_empty());
        assert!(k.as_slice().iter().all(|v| v.is_finite()));
    }
});
