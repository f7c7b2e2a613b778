//! Deterministic, splittable seeding.
//!
//! Every random stream is a ChaCha8 generator keyed by a 64-bit seed mixed
//! with a stream tag and an index, so draw `i` of a sampler never depends on
//! how many draws were made before it or on which thread made them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A 64-bit experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Seed(pub u64);

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Seed {
    /// Derives an independent child seed for a named sub-stream.
    pub fn derive(self, tag: u64) -> Seed {
        Seed(splitmix64(self.0 ^ splitmix64(tag.wrapping_add(0x5851_F42D_4C95_7F2D))))
    }

    /// Generator for the `index`-th item of stream `tag`.
    pub fn rng_at(self, tag: u64, index: u64) -> ChaCha8Rng {
        let key = splitmix64(self.derive(tag).0 ^ splitmix64(index));
        ChaCha8Rng::seed_from_u64(key)
    }

    /// A single sequential generator for stream `tag`.
    pub fn rng(self, tag: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.derive(tag).0)
    }
}

impl From<u64> for Seed {
    fn from(v: u64) -> Self {
        Seed(v)
    }
}

/// Stream tags used across the crate.
pub mod tags {
    pub const DATA_D: u64 = 1;
    pub const TEACHER: u64 = 2;
    pub const TEACHER_PROBE: u64 = 3;
    pub const NET_INIT: u64 = 4;
    pub const WGF_INJECT: u64 = 5;
    pub const WGF_INIT: u64 = 6;
    pub const LOWERBOUND: u64 = 7;
    pub const TEST_SET: u64 = 8;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let s = Seed(42);
        let a: u64 = s.rng_at(1, 7).gen();
        let b: u64 = s.rng_at(1, 7).gen();
        let c: u64 = s.rng_at(1, 8).gen();
        let e: u64 = s.rng_at(2, 7).gen();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, e);
    }
}
