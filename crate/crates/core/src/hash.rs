//! Stable, platform-independent 64-bit hashing.
//!
//! The bucketing hash is FNV-1a over the bytes, followed by the SplitMix64
//! finalizer for diffusion. It is fixed: changing it reassigns every visitor.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash of `salt ‖ 0x1F ‖ key`. The unit separator keeps `("ab","c")` and
/// `("a","bc")` apart.
pub fn stable_hash64(salt: &str, key: &str) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in salt.as_bytes().iter().chain(&[0x1F]).chain(key.as_bytes()) {
        h = (h ^ b as u64).wrapping_mul(FNV_PRIME);
    }
    splitmix64(h)
}

/// Maps a hash to `[0, 1)` using its top 53 bits.
pub fn unit_interval(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn splitmix_reference() {
        assert_eq!(splitmix64(0), 0xe220a8397b1dcdaf);
    }

    #[test]
    fn frozen_bucketing_hash() {
        // Changing this value silently re-buckets every visitor.
        assert_eq!(stable_hash64("randpair-v1", "visitor-1"), 0x4017ef10fef4b628);
        assert_ne!(stable_hash64("ab", "c"), stable_hash64("a", "bc"));
        assert!(unit_interval(u64::MAX) < 1.0);
    }
}
