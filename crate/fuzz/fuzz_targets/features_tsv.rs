#![no_main]

use libfuzzer_sys::fuzz_target;
use prepsense::features::{read_features_tsv, write_features_tsv};

fuzz_target!(|data: &[u8]| {
    let Ok(rows) = read_features_tsv(data) else { return };
    let mut first = Vec::new();
    write_features_tsv(&mut first, &rows).unwrap();
    let again = read_features_tsv(first.as_slice()).expect("written features parse");
    let mut second = Vec::new();
    write_features_tsv(&mut second, &again).unwrap();
    assert_eq!(first, second);
});
