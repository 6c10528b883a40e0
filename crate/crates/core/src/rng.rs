//! Seeded random streams.
//!
//! Every stochastic routine takes an explicit [`SimRng`]. The generator is
//! ChaCha8, a counter-based stream cipher: output depends only on
//! `(seed, stream, position)`, so runs reproduce bit-for-bit across
//! platforms and independent streams can be handed to parallel workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream 0 of `seed`.
pub fn from_seed(seed: u64) -> SimRng {
    stream(seed, 0)
}

/// Independent substream `id` of `seed`. Substreams never overlap.
pub fn stream(seed: u64, id: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
