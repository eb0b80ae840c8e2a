#![no_main]

use camo_core::pipeline::{Pipeline, PipelineConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = serde_json::from_slice::<PipelineConfig>(data) {
        if cfg.validate().is_ok() {
            Pipeline::new(cfg).expect("validated configs build a pipeline");
        }
    }
});
