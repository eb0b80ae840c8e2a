#![no_main]

use camo_core::pattern_synth::{offline_response, PatternRequest};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(req) = serde_json::from_slice::<PatternRequest>(data) {
        if req.validate().is_ok() {
            let resp = offline_response(&req).expect("valid requests have an offline answer");
            resp.validate(&req).unwrap();
        }
    }
});
