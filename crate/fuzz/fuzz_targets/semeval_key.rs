#![no_main]

use libfuzzer_sys::fuzz_target;
use prepsense::corpus::parse_semeval_key;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_semeval_key(text);
    }
});
