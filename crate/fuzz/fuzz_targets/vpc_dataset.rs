#![no_main]

use libfuzzer_sys::fuzz_target;
use prepsense::eval::parse_vpc;

fuzz_target!(|data: &[u8]| {
    let Ok(entries) = parse_vpc(data) else { return };
    for e in &entries {
        assert!(!e.gold.is_empty());
        let _ = e.phrase();
    }
});
