//! Stable per-item seed derivation.
//!
//! Every per-sentence random stream is seeded from `(global seed, item id)`
//! so that results do not depend on processing order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a global seed with a list of string parts (FNV-1a, then a
/// splitmix64 finaliser). Stable across platforms and releases.
pub fn derive(global: u64, parts: &[&str]) -> u64 {
    let mut h = FNV_OFFSET;
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
    };
    feed(&global.to_le_bytes());
    for part in parts {
        feed(&(part.len() as u64).to_le_bytes());
        feed(part.as_bytes());
    }
    splitmix64(h)
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_is_stable_and_separates_inputs() {
        assert_eq!(derive(7, &["s1"]), derive(7, &["s1"]));
        assert_ne!(derive(7, &["s1"]), derive(8, &["s1"]));
        assert_ne!(derive(7, &["s1"]), derive(7, &["s2"]));
        // Length prefixes keep part boundaries significant.
        assert_ne!(derive(7, &["ab", "c"]), derive(7, &["a", "bc"]));
    }
}
