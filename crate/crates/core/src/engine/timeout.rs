use std::collections::{BTreeMap, HashMap};

use crate::packet::FieldId;
use crate::time::Timestamp;

/// A registered timer. At most one live record exists per
/// `(timeout, key)`; setting it again replaces the record.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeoutRecord {
    pub timeout: usize,
    pub expiry: Timestamp,
    pub key: Vec<u8>,
    /// Saved values indexed by the program's context names.
    pub ctx: Vec<Option<f64>>,
    /// Fields the key was composed from, for rendering alerts.
    pub key_fields: Option<Vec<FieldId>>,
}

/// Timers ordered by expiry, ties broken by registration order.
#[derive(Debug, Default)]
pub struct TimeoutManager {
    queue: BTreeMap<(Timestamp, u64), TimeoutRecord>,
    index: HashMap<(usize, Vec<u8>), (Timestamp, u64)>,
    next_seq: u64,
}

impl TimeoutManager {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// Registers a timer, replacing any live one for the same timeout and key.
    pub fn set(&mut self, record: TimeoutRecord) {
        let id = (record.timeout, record.key.clone());
        if let Some(old) = self.index.remove(&id) {
            self.queue.remove(&old);
        }
        let slot = (record.expiry, self.next_seq);
        self.next_seq += 1;
        self.index.insert(id, slot);
        self.queue.insert(slot, record);
    }

    /// Moves a live timer to `expiry`, keeping its context. Returns false if
    /// no timer is live.
    pub fn rearm(&mut self, timeout: usize, key: &[u8], expiry: Timestamp) -> bool {
        let Some(slot) = self.index.get(&(timeout, key.to_vec())).copied() else {
            return false;
        };
        let mut record = self.queue.remove(&slot).expect("index and queue agree");
        record.expiry = expiry;
        self.index.remove(&(timeout, key.to_vec()));
        self.set(record);
        true
    }

    pub fn get_mut(&mut self, timeout: usize, key: &[u8]) -> Option<&mut TimeoutRecord> {
        let slot = self.index.get(&(timeout, key.to_vec()))?;
        self.queue.get_mut(slot)
    }

    pub fn get(&self, timeout: usize, key: &[u8]) -> Option<&TimeoutRecord> {
        let slot = self.index.get(&(timeout, key.to_vec()))?;
        self.queue.get(slot)
    }

    pub fn next_expiry(&self) -> Option<Timestamp> {
        self.queue.keys().next().map(|(t, _)| *t)
    }

    /// Removes and returns the earliest timer expiring at or before `to`.
    pub fn pop_due(&mut self, to: Timestamp) -> Option<TimeoutRecord> {
        let (&slot, _) = self.queue.iter().next().filter(|((t, _), _)| *t <= to)?;
        let record = self.queue.remove(&slot).expect("key just observed");
        self.index.remove(&(record.timeout, record.key.clone()));
        Some(record)
    }

    pub fn iter(&self) -> impl Iterator<Item = &TimeoutRecord> {
        self.queue.values()
    }
}
