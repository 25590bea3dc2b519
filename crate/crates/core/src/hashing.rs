//! Stable 64-bit hashing. `std`'s `DefaultHasher` is not guaranteed stable
//! across releases, and split assignment and table fingerprints must be.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Clone, Copy)]
pub struct Fnv64(u64);

impl Default for Fnv64 {
    fn default() -> Self {
        Fnv64(FNV_OFFSET)
    }
}

impl Fnv64 {
    pub fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= u64::from(*b);
            self.0 = self.0.wrapping_mul(FNV_PRIME);
        }
    }

    pub fn write_u64(&mut self, v: u64) {
        self.write(&v.to_le_bytes());
    }

    /// FNV output passed through the splitmix64 finalizer so low bits are
    /// usable for bucketing.
    pub fn finish(&self) -> u64 {
        mix64(self.0)
    }
}

pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a root seed and a list of stream identifiers.
pub fn derive_seed(root: u64, parts: &[u64]) -> u64 {
    let mut h = Fnv64::default();
    h.write_u64(root);
    for p in parts {
        h.write_u64(*p);
    }
    h.finish()
}
