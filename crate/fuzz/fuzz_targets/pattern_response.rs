#![no_main]

use camo_core::pattern_synth::{CandidateRegion, PatternRequest, PatternResponse};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let request = PatternRequest {
        sampled_rgb: [120, 80, 40],
        candidate_regions: (0..4)
            .map(|i| CandidateRegion {
                region_id: i,
                mean_rgb: [i as u8 * 60, 100, 50],
                w_px: 16,
                h_px: 16,
            })
            .collect(),
        illumination_gain: 1.0,
    };
    if let Ok(resp) = PatternResponse::parse(text, &request) {
        // Accepted responses always synthesize.
        let tile = camo_core::pattern_synth::synthesize_tile(&resp, 0).unwrap();
        assert_eq!(tile.width(), resp.tile_spec.tile_px);
    }
});
