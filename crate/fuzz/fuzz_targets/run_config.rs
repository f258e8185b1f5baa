#![no_main]
use libfuzzer_sys::fuzz_target;
use tipguard_cli::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(rc) = serde_json::from_slice::<RunConfig>(data) {
        let back: RunConfig = serde_json::from_value(rc.to_value()).unwrap();
        assert_eq!(back, rc);
    }
});
