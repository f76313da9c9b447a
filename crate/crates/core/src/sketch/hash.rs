use twox_hash::XxHash64;

use super::SketchError;

/// Parameters of a k-way hash family over `m` cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashConfig {
    pub k: u32,
    pub m: usize,
    pub seed: u64,
}

impl HashConfig {
    pub fn new(k: u32, m: usize, seed: u64) -> Result<Self, SketchError> {
        if k == 0 || m == 0 {
            return Err(SketchError::BadHashConfig { k, m });
        }
        Ok(HashConfig { k, m, seed })
    }

    #[inline]
    pub fn indices(&self, key: &[u8]) -> HashIndices {
        HashIndices {
            base: XxHash64::oneshot(self.seed, key),
            i: 0,
            k: self.k,
            m: self.m as u64,
        }
    }
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The `k` cell indices of one key. One seeded 64-bit hash is computed and
/// remixed per index; reduction to `[0, m)` uses a multiply-shift.
#[derive(Debug, Clone)]
pub struct HashIndices {
    base: u64,
    i: u32,
    k: u32,
    m: u64,
}

impl Iterator for HashIndices {
    type Item = usize;

    #[inline]
    fn next(&mut self) -> Option<usize> {
        if self.i == self.k {
            return None;
        }
        self.i += 1;
        let x = mix64(self.base.wrapping_add((self.i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)));
        Some(((x as u128 * self.m as u128) >> 64) as usize)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.k - self.i) as usize;
        (left, Some(left))
    }
}

impl ExactSizeIterator for HashIndices {}

pub fn hash_indices(key: &[u8], cfg: &HashConfig) -> Vec<usize> {
    cfg.indices(key).collect()
}
