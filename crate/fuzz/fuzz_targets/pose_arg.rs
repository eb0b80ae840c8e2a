#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(p) = camo_core::io::parse_pose_arg(text) {
            assert!(p.x().is_finite() && p.y().is_finite() && p.theta().is_finite());
        }
    }
});
