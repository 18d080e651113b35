#![no_main]

use libfuzzer_sys::fuzz_target;
use prepsense::corpus::tokenize_bytes;

fuzz_target!(|data: &[u8]| {
    let Ok(corpus) = tokenize_bytes(data) else { return };
    for sentence in &corpus.sentences {
        for token in sentence {
            assert!(!token.is_empty());
            assert!(!token.chars().any(char::is_whitespace));
        }
    }
});
