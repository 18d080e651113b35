#![no_main]

use libfuzzer_sys::fuzz_target;
use prepsense::corpus::{parse_semeval_xml, to_prep_instance};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(parsed) = parse_semeval_xml(text, "fuzz") {
        for inst in &parsed {
            let _ = to_prep_instance(inst, None);
        }
    }
});
