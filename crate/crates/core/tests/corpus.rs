//! Replays the checked-in fuzz corpus through the parsers on stable Rust.

use std::fs;
use std::path::PathBuf;

use sasd::datagen::InstanceSpec;
use sasd::experiment::{ExperimentConfig, SolveConfig};
use sasd::io::{decode_instance, encode_f64_blob, encode_instance, parse_f64_blob, parse_json_config, parse_kernel};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let path = e.unwrap().path();
            (path.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&path).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn instance_seeds() {
    for (name, data) in seeds("instance_decode") {
        let split = (u16::from_le_bytes([data[0], data[1]]) as usize).min(data.len() - 2);
        let (json, blob) = data[2..].split_at(split);
        let decoded = decode_instance(json, blob);
        assert_eq!(decoded.is_ok(), name == "valid", "{name}");
        if let Ok(inst) = decoded {
            let (j, b) = encode_instance(&inst, "x.bin").unwrap();
            assert_eq!(decode_instance(&j, &b).unwrap(), inst);
        }
    }
}

#[test]
fn blob_seeds() {
    for (name, data) in seeds("f64_blob") {
        match parse_f64_blob(&data) {
            Ok(v) => {
                assert_eq!(name, "three_values");
                assert_eq!(encode_f64_blob(&v), data);
            }
            Err(_) => assert!(name == "ragged" || name == "nan", "{name}"),
        }
    }
}

#[test]
fn config_seeds() {
    for (name, data) in seeds("config_json") {
        let ok = match name.as_str() {
            "grid" | "grid_list" => parse_json_config::<ExperimentConfig>(&data).unwrap().validate().is_ok(),
            "solve" => {
                let cfg = parse_json_config::<SolveConfig>(&data).unwrap();
                cfg.minimize.validate().is_ok() && cfg.refine.validate().is_ok()
            }
            "instance_spec" => parse_json_config::<InstanceSpec>(&data).unwrap().validate().is_ok(),
            other => panic!("unexpected seed {other}"),
        };
        assert!(ok, "{name}");
    }
}

#[test]
fn kernel_seeds() {
    for (name, data) in seeds("kernel") {
        let (mode, body) = data.split_first().unwrap();
        let parsed = parse_kernel(body, mode & 1 == 1);
        assert_eq!(parsed.is_ok(), name != "json_nan", "{name}");
    }
}
