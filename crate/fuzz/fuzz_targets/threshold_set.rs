#![no_main]
use libfuzzer_sys::fuzz_target;
use tipguard_core::detector::ThresholdSet;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = serde_json::from_slice::<ThresholdSet>(data) {
        let bytes = serde_json::to_vec(&t).unwrap();
        let back: ThresholdSet = serde_json::from_slice(&bytes).unwrap();
        assert!(t.values.iter().zip(&back.values).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
});
