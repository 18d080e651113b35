#![no_main]

use libfuzzer_sys::fuzz_target;
use prepsense::eval::{parse_report_tsv, render_text, write_report_tsv};

fuzz_target!(|data: &[u8]| {
    let Ok(records) = parse_report_tsv(data) else { return };
    let mut first = Vec::new();
    write_report_tsv(&mut first, &records).unwrap();
    let again = parse_report_tsv(first.as_slice()).expect("written report parses");
    let mut second = Vec::new();
    write_report_tsv(&mut second, &again).unwrap();
    assert_eq!(first, second);
    let _ = render_text(&records);
});
