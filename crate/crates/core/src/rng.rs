//! Seed derivation for reproducible per-agent random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a sequence of words into one 64-bit seed.
pub fn mix_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x5E_ED0F_57A6_u64, |acc, &p| splitmix(acc ^ splitmix(p)))
}

pub fn seeded(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Independent stream for one agent at one time step under a global seed.
/// `salt` separates streams that share the same (seed, agent, step) triple,
/// for instance the attractor draw and the action draw.
pub fn agent_stream(seed: u64, agent: usize, step: u64, salt: u64) -> SimRng {
    seeded(mix_seed(&[seed, agent as u64, step, salt]))
}
