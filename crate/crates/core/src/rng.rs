//! Seed-derived random substreams.
//!
//! Every consumer of randomness in a run draws from its own ChaCha stream
//! keyed by `(seed, purpose, a, b)`, so adding or removing a consumer never
//! shifts the draws seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    /// Hello/TC frames on the directed link `(a, b)`.
    ControlChannel = 1,
    /// Data frames on the directed link `(a, b)`.
    DataChannel = 2,
    /// Timer jitter of node `a`.
    Timers = 3,
    /// GPS error of node `a`.
    Gps = 4,
    /// Initial loiter phase of node `a`.
    Phase = 5,
    /// Free for tests and tools.
    Auxiliary = 6,
}

/// Independent stream for `(seed, purpose, a, b)`.
pub fn substream(seed: u64, purpose: Purpose, a: u32, b: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 56) | (u64::from(a) << 28) | u64::from(b & 0x0fff_ffff));
    rng
}
