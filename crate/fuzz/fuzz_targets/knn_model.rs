#![no_main]

use libfuzzer_sys::fuzz_target;
use prepsense::KnnModel;

fuzz_target!(|data: &[u8]| {
    let Ok(model) = KnnModel::read_tsv(data) else { return };
    let mut first = Vec::new();
    model.write_tsv(&mut first).unwrap();
    let again = KnnModel::read_tsv(first.as_slice()).expect("written model parses");
    let mut second = Vec::new();
    again.write_tsv(&mut second).unwrap();
    assert_eq!(first, second);
});
