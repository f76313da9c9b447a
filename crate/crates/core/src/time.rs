//! Virtual time.
//!
//! The engine clock only ever comes from capture metadata. Time is kept as
//! integer microseconds so that timeout expiries compare exactly against
//! packet timestamps read back from a pcap file.

use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

/// A point on the virtual clock, in microseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub fn from_micros(us: u64) -> Self {
        Timestamp(us)
    }

    /// Rounds to the nearest microsecond; negative input saturates at zero.
    pub fn from_secs_f64(secs: f64) -> Self {
        Timestamp(secs_to_micros(secs))
    }

    pub fn micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn saturating_sub(self, other: Timestamp) -> u64 {
        self.0.saturating_sub(other.0)
    }
}

/// Converts a duration in seconds to whole microseconds.
pub fn secs_to_micros(secs: f64) -> u64 {
    if !(secs > 0.0) {
        return 0;
    }
    (secs * 1e6).round() as u64
}

impl Add<u64> for Timestamp {
    type Output = Timestamp;
    fn add(self, us: u64) -> Timestamp {
        Timestamp(self.0.saturating_add(us))
    }
}

impl Sub for Timestamp {
    type Output = u64;
    fn sub(self, rhs: Timestamp) -> u64 {
        self.0.saturating_sub(rhs.0)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}
