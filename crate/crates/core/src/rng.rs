//! Counter-based random streams.
//!
//! Every atom draws from its own ChaCha8 stream keyed by `(master seed, atom index)`,
//! so a trajectory never depends on which thread ran it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type AtomRng = ChaCha8Rng;

/// Independent stream `index` under `seed`.
pub fn atom_stream(seed: u64, index: u64) -> AtomRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derive a child master seed, e.g. one per spectrum point or sweep point.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    // splitmix64 finalizer over a golden-ratio offset
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
