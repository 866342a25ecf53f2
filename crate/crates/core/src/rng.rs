//! Counter-based random streams.
//!
//! The generator for `(seed, path, step)` is ChaCha8 keyed by a SplitMix64
//! expansion of `(seed, path)`, on stream `step`. Any draw can be reproduced
//! without replaying earlier ones, so batches are scheduling-independent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The generator for one step of one path.
pub fn step_rng(seed: u64, path: u64, step: u64) -> ChaCha8Rng {
    let mut state = seed;
    let mixed = splitmix64(&mut state) ^ path.wrapping_mul(0xD605_BBB5_8C8A_BE39);
    let mut state = mixed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(step);
    rng
}
