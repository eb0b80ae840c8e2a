#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(samples) = camo_core::io::read_trace(data) {
        // Anything accepted is strictly increasing in time and writes back out.
        assert!(samples.windows(2).all(|w| w[0].t < w[1].t));
        let mut out = Vec::new();
        camo_core::io::write_trace(&mut out, &samples).unwrap();
        assert_eq!(camo_core::io::read_trace(&out[..]).unwrap(), samples);
    }
});
