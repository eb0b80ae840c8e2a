#![no_main]

use camo_core::simulator::Scenario;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(s) = Scenario::from_json(text) {
        // Validated scenarios plan without error, unless they are huge.
        if s.duration() * s.rate < 2e5 {
            let _ = camo_core::simulator::plan_trajectory(&s);
        }
    }
});
