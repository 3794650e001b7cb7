//! Deterministic random streams.
//!
//! Every episode is driven by a single `u64` seed. Disjoint ChaCha streams are
//! carved out of it so that the environment, the shared (common-seed)
//! randomness of the queues and each queue's private randomness never
//! interfere with one another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream identifiers under one episode seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Arrivals and service indicators.
    Environment,
    /// Uniform tie-breaks between packets with equal birth times.
    TieBreak,
    /// The common seed shared by all queues.
    Shared,
    /// Private randomness of queue `i` (0-based).
    Private(usize),
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Environment => 0,
            Stream::TieBreak => 1,
            Stream::Shared => 2,
            Stream::Private(i) => 16 + i as u64,
        }
    }
}

/// Builds the generator for `stream` under episode seed `seed`.
pub fn stream(seed: u64, which: Stream) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}
