#![no_main]

use libfuzzer_sys::fuzz_target;
use prepsense::corpus::{read_instances, write_instances};

fuzz_target!(|data: &[u8]| {
    let Ok(instances) = read_instances(data) else { return };
    let mut first = Vec::new();
    write_instances(&mut first, &instances).unwrap();
    let again = read_instances(first.as_slice()).expect("written instances parse");
    assert_eq!(instances, again);
});
