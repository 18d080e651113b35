#![no_main]

use libfuzzer_sys::fuzz_target;
use prepsense::EmbeddingTable;

fuzz_target!(|data: &[u8]| {
    let Ok(loaded) = EmbeddingTable::read_from(data) else {
        return;
    };
    let mut first = Vec::new();
    loaded.table.write_to(&mut first).unwrap();
    let again = EmbeddingTable::read_from(first.as_slice()).expect("written table parses");
    let mut second = Vec::new();
    again.table.write_to(&mut second).unwrap();
    assert_eq!(first, second);
});
