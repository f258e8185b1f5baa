#![no_main]
use libfuzzer_sys::fuzz_target;
use tipguard_core::timeseries::parse_annotation;

fuzz_target!(|data: &[u8]| {
    if let Ok(ann) = parse_annotation(data) {
        let bytes = serde_json::to_vec(&ann).unwrap();
        assert_eq!(parse_annotation(&bytes).unwrap(), ann);
    }
});
