//! Counter-based random streams. Every Monte Carlo draw gets its own stream
//! keyed by `(seed, draw index)`, so results do not depend on how draws are
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator for draw `index` under `seed`.
pub fn draw_stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
