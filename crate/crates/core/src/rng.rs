//! Seeded random substreams.
//!
//! All randomness in the crate flows through [`substream`], which keys a
//! ChaCha8 generator by a master seed plus a short list of integers (vertex
//! index, repetition, purpose tag). Two calls with the same key produce the
//! same sequence regardless of thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags mixed into substream keys so different consumers of the same
/// seed never share a stream.
pub mod tag {
    pub const SCENARIO_BLOCK: u64 = 0x5b10c;
    pub const SCENARIO_WEIGHT: u64 = 0x7e7a;
    pub const ADJACENCY: u64 = 0xad1;
    pub const VI: u64 = 0x5a41;
    pub const MCMC: u64 = 0x3c3c;
    pub const MCMC_PILOT: u64 = 0x3c3d;
    pub const GMM: u64 = 0x6a1a;
    pub const LANCZOS: u64 = 0x1a2c;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a 64-bit seed from a master seed and a key path.
pub fn derive_seed(seed: u64, keys: &[u64]) -> u64 {
    let mut h = splitmix64(seed);
    for &k in keys {
        h = splitmix64(h ^ splitmix64(k.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    h
}

/// A ChaCha8 generator keyed by `(seed, keys...)`.
pub fn substream(seed: u64, keys: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, keys))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_key_same_stream() {
        let mut a = substream(42, &[1, 2]);
        let mut b = substream(42, &[1, 2]);
        for _ in 0..16 {
            assert_eq!(a.random::<u64>(), b.random::<u64>());
        }
    }

    #[test]
    fn key_order_matters() {
        assert_ne!(derive_seed(1, &[2, 3]), derive_seed(1, &[3, 2]));
        assert_ne!(derive_seed(1, &[0]), derive_seed(1, &[]));
    }
}
