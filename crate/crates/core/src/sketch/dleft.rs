use thiserror::Error;
use twox_hash::XxHash64;

use super::mix64;

/// All `d` candidate buckets for a key are full.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("d-left table full: every candidate bucket is at capacity")]
pub struct TableFull;

#[derive(Debug, Clone)]
struct Slot<V> {
    fp: u64,
    key: Box<[u8]>,
    value: V,
}

/// d-left hash table keyed by byte strings.
///
/// `d` subtables of `buckets` buckets each, `cells` slots per bucket. A new
/// key goes to the least-loaded of its `d` candidate buckets, ties broken
/// towards the lowest subtable. Entries store a 64-bit fingerprint and the
/// full key, so lookups are exact.
#[derive(Debug, Clone)]
pub struct DLeftTable<V> {
    d: usize,
    buckets: usize,
    cells: usize,
    seed: u64,
    slots: Vec<Option<Slot<V>>>,
    loads: Vec<u16>,
    len: usize,
}

pub const DEFAULT_SUBTABLES: usize = 4;
pub const DEFAULT_CELLS: usize = 8;

impl<V> DLeftTable<V> {
    pub fn new(d: usize, buckets: usize, cells: usize, seed: u64) -> Self {
        assert!(d >= 1 && buckets >= 1 && cells >= 1 && cells <= u16::MAX as usize);
        let mut slots = Vec::with_capacity(d * buckets * cells);
        slots.resize_with(d * buckets * cells, || None);
        DLeftTable { d, buckets, cells, seed, slots, loads: vec![0; d * buckets], len: 0 }
    }

    /// Table with `capacity` total cells using the default geometry
    /// (4 subtables, 8 cells per bucket).
    pub fn with_capacity(capacity: usize, seed: u64) -> Self {
        let per_bucket = DEFAULT_SUBTABLES * DEFAULT_CELLS;
        Self::new(DEFAULT_SUBTABLES, capacity.div_ceil(per_bucket).max(1), DEFAULT_CELLS, seed)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    #[inline]
    fn fingerprint(&self, key: &[u8]) -> u64 {
        XxHash64::oneshot(self.seed, key)
    }

    #[inline]
    fn bucket(&self, fp: u64, sub: usize) -> usize {
        let x = mix64(fp ^ (sub as u64 + 1).wrapping_mul(0xd6e8_feb8_6659_fd93));
        sub * self.buckets + ((x as u128 * self.buckets as u128) >> 64) as usize
    }

    fn find(&self, key: &[u8], fp: u64) -> Option<usize> {
        for sub in 0..self.d {
            let base = self.bucket(fp, sub) * self.cells;
            for pos in base..base + self.cells {
                if let Some(s) = &self.slots[pos] {
                    if s.fp == fp && &*s.key == key {
                        return Some(pos);
                    }
                }
            }
        }
        None
    }

    pub fn get(&self, key: &[u8]) -> Option<&V> {
        let fp = self.fingerprint(key);
        self.find(key, fp).and_then(|pos| self.slots[pos].as_ref().map(|s| &s.value))
    }

    pub fn get_mut(&mut self, key: &[u8]) -> Option<&mut V> {
        let fp = self.fingerprint(key);
        let pos = self.find(key, fp)?;
        self.slots[pos].as_mut().map(|s| &mut s.value)
    }

    pub fn put(&mut self, key: &[u8], value: V) -> Result<(), TableFull> {
        let fp = self.fingerprint(key);
        if let Some(pos) = self.find(key, fp) {
            if let Some(s) = self.slots[pos].as_mut() {
                s.value = value;
            }
            return Ok(());
        }
        let mut best: Option<usize> = None;
        for sub in 0..self.d {
            let b = self.bucket(fp, sub);
            if (self.loads[b] as usize) < self.cells && best.map_or(true, |cur| self.loads[b] < self.loads[cur]) {
                best = Some(b);
            }
        }
        let b = best.ok_or(TableFull)?;
        let base = b * self.cells;
        let pos = (base..base + self.cells)
            .find(|&p| self.slots[p].is_none())
            .expect("bucket load below capacity has a free cell");
        self.slots[pos] = Some(Slot { fp, key: key.into(), value });
        self.loads[b] += 1;
        self.len += 1;
        Ok(())
    }

    pub fn take(&mut self, key: &[u8]) -> Option<V> {
        let fp = self.fingerprint(key);
        let pos = self.find(key, fp)?;
        let slot = self.slots[pos].take()?;
        self.loads[pos / self.cells] -= 1;
        self.len -= 1;
        Some(slot.value)
    }

    /// Removes `key`, returning whether it was present.
    pub fn remove(&mut self, key: &[u8]) -> bool {
        self.take(key).is_some()
    }

    /// Entries in slot order (deterministic for a given operation history).
    pub fn iter(&self) -> impl Iterator<Item = (&[u8], &V)> {
        self.slots.iter().flatten().map(|s| (&*s.key, &s.value))
    }

    /// Highest bucket occupancy, for sizing diagnostics.
    pub fn max_bucket_load(&self) -> usize {
        self.loads.iter().copied().max().unwrap_or(0) as usize
    }
}
