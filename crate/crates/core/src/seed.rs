//! Stable seed derivation for per-trial random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// Derives a child seed from a master seed, a textual key and an index.
///
/// The key is typically a canonical rendering of a parameter tuple, so the
/// derived stream does not depend on where the tuple sits in a sweep grid.
pub fn derive_seed(master: u64, key: &str, index: u64) -> u64 {
    let h = mix64(master ^ fnv1a(key.as_bytes()));
    mix64(h ^ mix64(index.wrapping_add(0x632b_e59b_d9b4_e019)))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_stable_and_spreads() {
        assert_eq!(derive_seed(7, "a", 3), derive_seed(7, "a", 3));
        assert_ne!(derive_seed(7, "a", 3), derive_seed(7, "a", 4));
        assert_ne!(derive_seed(7, "a", 3), derive_seed(7, "b", 3));
        assert_ne!(derive_seed(7, "a", 3), derive_seed(8, "a", 3));
    }
}
