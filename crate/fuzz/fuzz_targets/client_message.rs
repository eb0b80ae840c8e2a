#![no_main]

use camo_service::protocol::ClientMessage;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(msg) = serde_json::from_slice::<ClientMessage>(data) {
        let text = serde_json::to_string(&msg).unwrap();
        let _ = serde_json::from_str::<ClientMessage>(&text).unwrap();
    }
});
