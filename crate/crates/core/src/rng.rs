//! Deterministic random streams.
//!
//! Every stochastic component draws from its own ChaCha stream, addressed by
//! the run seed and a stream id. Blocks of a simulation therefore replay
//! identically no matter which thread generates them or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids below this value are reserved for per-process realizations;
/// block `k` uses `BLOCK_STREAM_BASE + k`.
pub const BLOCK_STREAM_BASE: u64 = 1 << 32;

pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
