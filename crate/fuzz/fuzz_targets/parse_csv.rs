#![no_main]
use libfuzzer_sys::fuzz_target;
use tipguard_core::timeseries::{parse_csv, write_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(series) = parse_csv(data) else { return };
    assert!(!series.is_empty());
    assert!(series.samples().windows(2).all(|w| w[1].t > w[0].t));
    // whatever parses must survive a write/parse round trip unchanged
    let mut buf = Vec::new();
    write_csv(&series, &mut buf).unwrap();
    let again = parse_csv(buf.as_slice()).unwrap();
    assert_eq!(series.samples(), again.samples());
});
