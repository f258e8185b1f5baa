#![no_main]
use libfuzzer_sys::fuzz_target;
use tipguard_core::synth::{GroundTruth, TransientKind};

fuzz_target!(|data: &[u8]| {
    let Ok(truth) = serde_json::from_slice::<GroundTruth>(data) else { return };
    let tips = truth.of_kind(TransientKind::TipOver).count();
    let slips = truth.of_kind(TransientKind::Slip).count();
    assert_eq!(tips + slips, truth.intervals.len());
    let bytes = serde_json::to_vec(&truth).unwrap();
    assert_eq!(serde_json::from_slice::<GroundTruth>(&bytes).unwrap(), truth);
});
