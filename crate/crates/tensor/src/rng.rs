use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Deterministic RNG for a (seed, stream) pair. Distinct streams drawn from
/// the same seed are independent.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Well-known stream ids so call sites stay aligned across runs.
pub mod streams {
    pub const PARAM_INIT: u64 = 1;
    pub const DATA_ORDER: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const TIMESTEPS: u64 = 4;
    pub const SAMPLER: u64 = 5;
    pub const PROBE: u64 = 6;
}
