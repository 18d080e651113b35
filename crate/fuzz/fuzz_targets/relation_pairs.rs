#![no_main]

use libfuzzer_sys::fuzz_target;
use prepsense::eval::parse_relation_pairs;

fuzz_target!(|data: &[u8]| {
    let Ok(sets) = parse_relation_pairs(data) else { return };
    for set in &sets {
        assert!(!set.pairs.is_empty());
    }
});
