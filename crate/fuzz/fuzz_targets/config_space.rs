#![no_main]
use libfuzzer_sys::fuzz_target;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tipguard_core::bohb::{Config, ConfigSpace, Dimension};

fuzz_target!(|data: &[u8]| {
    let Ok(space) = ConfigSpace::from_json(data) else { return };
    let mut rng = ChaCha8Rng::seed_from_u64(data.len() as u64);
    for _ in 0..8 {
        let c = space.sample_uniform(&mut rng);
        assert!(space.contains(&c));
        let _ = space.to_json(&c);
    }
    for (i, d) in space.dimensions.iter().enumerate() {
        if let Dimension::Integer { low, high, .. } = d {
            for v in [*low, *high] {
                assert_eq!(space.from_unit(i, space.to_unit(i, v)), v);
            }
        }
    }
    assert!(!space.contains(&Config(vec![])));
});
