#![no_main]

use libfuzzer_sys::fuzz_target;
use sasd::io::{decode_instance, encode_instance, parse_instance_meta};

// Layout: 2-byte little-endian header length, JSON header, then the blob.
fuzz_target!(|data: &[u8]| {
    if data.len() < 2 {
        return;
    }
    let split = (u16::from_le_bytes([data[0], data[1]]) as usize).min(data.len() - 2);
    let (json, blob) = data[2..].split_at(split);
    let _ = parse_instance_meta(json);
    if let Ok(inst) = decode_instance(json, blob) {
        // Anything accepted must survive a round trip unchanged.
        let (json2, blob2) = encode_instance(&inst, "fuzz.bin").unwrap();
        assert_eq!(decode_instance(&json2, &blob2).unwrap(), inst);
    }
});
