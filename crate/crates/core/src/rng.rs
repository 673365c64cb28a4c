//! Seeded, splittable random streams.
//!
//! A stream is a ChaCha8 generator keyed by a 64-bit seed. `substream(i)`
//! selects ChaCha stream `i + 1` under the same key, so walker `i` sees the
//! same numbers no matter which thread runs it or in what order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const RNG_ALGORITHM: &str = "chacha8";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn algorithm(&self) -> &'static str {
        RNG_ALGORITHM
    }

    /// The root generator (stream 0).
    pub fn generator(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    /// Independent generator for work item `index`.
    pub fn substream(&self, index: u64) -> ChaCha8Rng {
        let mut g = ChaCha8Rng::seed_from_u64(self.seed);
        g.set_stream(index.wrapping_add(1));
        g
    }

    /// Derived stream for a named sub-experiment (e.g. one scan scale).
    pub fn child(&self, tag: u64) -> Self {
        let mut g = self.substream(u64::MAX - tag);
        Self { seed: g.next_u64() }
    }
}

/// Convenience constructor.
pub fn rng_stream(seed: u64) -> RngStream {
    RngStream::new(seed)
}
