//! Stable seed derivation for independent per-item random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Accumulates byte fields into a 64-bit key. Fields are length-prefixed so
/// `("ab", "c")` and `("a", "bc")` derive different keys.
#[derive(Debug, Clone)]
pub(crate) struct StreamKey(u64);

impl StreamKey {
    pub(crate) fn new(seed: u64, domain: &str) -> Self {
        StreamKey(splitmix64(seed)).bytes(domain.as_bytes())
    }

    pub(crate) fn bytes(mut self, data: &[u8]) -> Self {
        let mut h = self.0 ^ FNV_OFFSET;
        for b in (data.len() as u64).to_le_bytes().iter().chain(data) {
            h ^= u64::from(*b);
            h = h.wrapping_mul(FNV_PRIME);
        }
        self.0 = splitmix64(h);
        self
    }

    pub(crate) fn int(self, v: u64) -> Self {
        self.bytes(&v.to_le_bytes())
    }

    pub(crate) fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}
