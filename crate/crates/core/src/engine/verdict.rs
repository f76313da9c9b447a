use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::time::Timestamp;

/// What the monitor would do with the packet. Reported, not enforced.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "tag")]
pub enum Disposition {
    #[default]
    Allow,
    Drop,
    Mark(String),
}

/// A record emitted by EXPORT or PRINT. Field order is the JSON line order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub program: String,
    pub event: String,
    /// Virtual clock as `seconds.micros`, exact.
    pub clock: String,
    pub key_hex: String,
    /// Key rendered from its fields when they are known.
    pub key: Option<String>,
    pub state_before: String,
    pub state_after: String,
    pub action: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub message: Option<String>,
    pub features: BTreeMap<String, f64>,
}

/// Outcome of one event.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Verdict {
    pub disposition: Disposition,
    pub alerts: Vec<Alert>,
    /// Matched event id; `None` for malformed or unmatched packets.
    pub event: Option<String>,
    pub key: Option<Vec<u8>>,
    pub state_before: Option<String>,
    pub state_after: Option<String>,
    pub clock: Timestamp,
    /// True for verdicts of synthesized timeout events.
    pub from_timeout: bool,
    /// Feature values computed for this event, by feature index.
    pub features: Vec<Option<f64>>,
}

impl Verdict {
    pub fn transitioned(&self) -> bool {
        self.state_before.is_some() && self.state_before != self.state_after
    }
}

/// Diagnostic counters. Processed packets equal matched + unmatched + malformed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounters {
    pub packets: u64,
    pub matched: u64,
    pub unmatched: u64,
    pub malformed: u64,
    /// Matches per event id, timeouts included.
    pub events: BTreeMap<String, u64>,
    pub timeouts_fired: u64,
    pub timeouts_unhandled: u64,
    pub clamped_timestamps: u64,
    pub mop_key_unavailable: u64,
    pub chain_suppressed: u64,
    pub feature_errors: u64,
    pub condition_errors: u64,
    pub action_errors: u64,
    pub missing_timeouts: u64,
    pub table_full: u64,
    pub alerts: u64,
}

impl RunCounters {
    /// Adds another instance's counters, e.g. from a shard.
    pub fn merge(&mut self, other: &RunCounters) {
        self.packets += other.packets;
        self.matched += other.matched;
        self.unmatched += other.unmatched;
        self.malformed += other.malformed;
        for (k, v) in &other.events {
            *self.events.entry(k.clone()).or_default() += v;
        }
        self.timeouts_fired += other.timeouts_fired;
        self.timeouts_unhandled += other.timeouts_unhandled;
        self.clamped_timestamps += other.clamped_timestamps;
        self.mop_key_unavailable += other.mop_key_unavailable;
        self.chain_suppressed += other.chain_suppressed;
        self.feature_errors += other.feature_errors;
        self.condition_errors += other.condition_errors;
        self.action_errors += other.action_errors;
        self.missing_timeouts += other.missing_timeouts;
        self.table_full += other.table_full;
        self.alerts += other.alerts;
    }
}
