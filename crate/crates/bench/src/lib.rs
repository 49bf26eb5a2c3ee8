//! Shared inputs for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wristkey_core::synth::{generate_session, SynthConfig};
use wristkey_core::RecordingSession;

/// The default synthetic session: 12 keys, 20 presses each.
pub fn session() -> RecordingSession {
    generate_session(&SynthConfig::default()).expect("default synth config is valid")
}

/// Uniform values in `[-1, 1)`.
pub fn values(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}
