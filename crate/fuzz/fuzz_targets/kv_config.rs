#![no_main]

use libfuzzer_sys::fuzz_target;
use prepsense::config::parse_kv_config;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(entries) = parse_kv_config(text) {
            for key in entries.keys() {
                assert!(!key.is_empty());
            }
        }
    }
});
