#![no_main]

use libfuzzer_sys::fuzz_target;
use stigmergy::harness::ExperimentConfig;

fuzz_target!(|text: &str| {
    if let Ok(cfg) = ExperimentConfig::parse(text) {
        let _ = cfg.validate();
    }
});
