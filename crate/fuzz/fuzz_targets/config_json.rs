#![no_main]

use libfuzzer_sys::fuzz_target;
use sasd::datagen::InstanceSpec;
use sasd::experiment::{ExperimentConfig, SolveConfig};
use sasd::io::parse_json_config;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = parse_json_config::<ExperimentConfig>(data) {
        if cfg.validate().is_ok() {
            let _ = cfg.tasks();
        }
    }
    if let Ok(cfg) = parse_json_config::<SolveConfig>(data) {
        let _ = cfg.minimize.validate();
        let _ = cfg.refine.validate();
    }
    if let Ok(spec) = parse_json_config::<InstanceSpec>(data) {
        let _ = spec.validate();
    }
});
