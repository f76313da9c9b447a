//! Probabilistic data structures backing program metrics and flow state.
//!
//! The building block is the multi-hash (MH) metric: an optional
//! [`VariationDetector`] (a rolling pair of Bloom filters answering "has this
//! detector key been seen in the current window?") gating an optional
//! [`VariationMonitor`] (a counting sketch, either additive or exponentially
//! time-decaying). Disabling one of the two stages yields a plain counter or
//! a first-seen matcher.

mod detector;
mod dleft;
mod hash;
mod metric;
mod monitor;

pub use detector::{DetectorPolicy, VariationDetector};
pub use dleft::{DLeftTable, TableFull};
pub use hash::{hash_indices, mix64, HashConfig, HashIndices};
pub use metric::{Metric, MultiHashMetric};
pub use monitor::{MonitorKind, VariationMonitor};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SketchError {
    #[error("hash config needs k >= 1 and m >= 1 (got k={k}, m={m})")]
    BadHashConfig { k: u32, m: usize },
    #[error("variation detector needs a swap threshold or a window")]
    NoSwapPolicy,
    #[error("detector window must be a positive number of seconds")]
    BadWindow,
    #[error("time-decaying monitor needs tau > 0")]
    BadTau,
    #[error("metric `{0}` has neither a detector nor a monitor stage")]
    EmptyMetric(String),
}

/// Fixed-size bit array used by the Bloom filters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct BitSet {
    words: Vec<u64>,
}

impl BitSet {
    pub(crate) fn new(bits: usize) -> Self {
        BitSet { words: vec![0; bits.div_ceil(64)] }
    }

    #[inline]
    pub(crate) fn set(&mut self, i: usize) {
        self.words[i >> 6] |= 1 << (i & 63);
    }

    #[inline]
    pub(crate) fn get(&self, i: usize) -> bool {
        self.words[i >> 6] & (1 << (i & 63)) != 0
    }

    pub(crate) fn clear(&mut self) {
        self.words.iter_mut().for_each(|w| *w = 0);
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }
}
