//! Seedable, splittable random streams.
//!
//! Every replica or grid task derives its own ChaCha stream from the master
//! seed and a stream index, so concurrent runs are reproducible regardless of
//! scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// RNG for stream `stream` of master seed `master_seed`.
pub fn stream_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}
