#![no_main]
use libfuzzer_sys::fuzz_target;
use tipguard_core::autoencoder::Checkpoint;

fuzz_target!(|data: &[u8]| {
    if data.len() > 1 << 20 {
        return;
    }
    let Ok(ck) = Checkpoint::from_json(data) else { return };
    let Ok(model) = ck.to_model() else { return };
    let spec = &model.spec;
    if spec.input_len * spec.channels > 4096 || spec.encoder_layer_sizes.iter().sum::<usize>() > 256 {
        return;
    }
    let input = vec![0.0; spec.input_len * spec.channels];
    if let Ok(y) = model.forecast(&input) {
        assert_eq!(y.len(), spec.output_len * spec.channels);
    }
});
