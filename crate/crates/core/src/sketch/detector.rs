use super::{BitSet, HashConfig, SketchError};

/// When the active Bloom filter is retired.
///
/// With a window, filters rotate on a fixed epoch grid anchored at the first
/// observation: a key inserted at time `t` stays visible for at least
/// `window` and at most `2 * window` seconds. With a threshold, the filter
/// rotates after that many distinct insertions. If both are set either one
/// triggers a swap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorPolicy {
    pub window: Option<f64>,
    pub swap_threshold: Option<u64>,
}

impl DetectorPolicy {
    pub fn window(secs: f64) -> Self {
        DetectorPolicy { window: Some(secs), swap_threshold: None }
    }

    pub fn threshold(inserts: u64) -> Self {
        DetectorPolicy { window: None, swap_threshold: Some(inserts) }
    }
}

/// Rolling "seen in window" detector built from two alternating Bloom
/// filters. Membership is the OR of both filters.
#[derive(Debug, Clone)]
pub struct VariationDetector {
    active: BitSet,
    previous: BitSet,
    hash: HashConfig,
    policy: DetectorPolicy,
    inserts_since_swap: u64,
    epoch_start: Option<f64>,
}

impl VariationDetector {
    pub fn new(hash: HashConfig, policy: DetectorPolicy) -> Result<Self, SketchError> {
        match (policy.window, policy.swap_threshold) {
            (None, None) => return Err(SketchError::NoSwapPolicy),
            (Some(w), _) if !(w > 0.0) || !w.is_finite() => return Err(SketchError::BadWindow),
            _ => {}
        }
        Ok(VariationDetector {
            active: BitSet::new(hash.m),
            previous: BitSet::new(hash.m),
            hash,
            policy,
            inserts_since_swap: 0,
            epoch_start: None,
        })
    }

    pub fn hash(&self) -> &HashConfig {
        &self.hash
    }

    /// Number of time-driven swaps due at `now`.
    fn due_swaps(&self, now: f64) -> u64 {
        match (self.policy.window, self.epoch_start) {
            (Some(w), Some(start)) if now > start => ((now - start) / w).floor() as u64,
            _ => 0,
        }
    }

    fn swap(&mut self) {
        std::mem::swap(&mut self.active, &mut self.previous);
        self.active.clear();
        self.inserts_since_swap = 0;
    }

    fn rotate_to(&mut self, now: f64) {
        let Some(w) = self.policy.window else { return };
        let start = *self.epoch_start.get_or_insert(now);
        let n = self.due_swaps(now);
        match n {
            0 => return,
            1 => self.swap(),
            _ => {
                self.active.clear();
                self.previous.clear();
                self.inserts_since_swap = 0;
            }
        }
        self.epoch_start = Some(start + n as f64 * w);
    }

    /// Inserts `dfk` and reports whether it was absent from both filters,
    /// i.e. whether this is its first appearance in the current window.
    pub fn observe(&mut self, dfk: &[u8], now: f64) -> bool {
        self.rotate_to(now);
        if let Some(limit) = self.policy.swap_threshold {
            if self.inserts_since_swap >= limit {
                self.swap();
            }
        }
        let mut in_active = true;
        let mut in_previous = true;
        for i in self.hash.indices(dfk) {
            in_active &= self.active.get(i);
            in_previous &= self.previous.get(i);
            self.active.set(i);
        }
        let fresh = !(in_active || in_previous);
        if !in_active {
            self.inserts_since_swap += 1;
        }
        fresh
    }

    /// Read-only membership test as of `now`, accounting for swaps that are
    /// due but not yet applied.
    pub fn contains(&self, key: &[u8], now: f64) -> bool {
        let due = self.due_swaps(now);
        if due >= 2 {
            return false;
        }
        let mut in_active = true;
        let mut in_previous = due == 0;
        for i in self.hash.indices(key) {
            in_active &= self.active.get(i);
            in_previous &= self.previous.get(i);
        }
        in_active || in_previous
    }

    pub fn active_is_empty(&self) -> bool {
        self.active.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vd(window: f64) -> VariationDetector {
        VariationDetector::new(HashConfig::new(3, 4096, 5).unwrap(), DetectorPolicy::window(window)).unwrap()
    }

    #[test]
    fn first_then_repeat() {
        let mut d = vd(60.0);
        assert!(d.observe(b"K", 0.0));
        assert!(!d.observe(b"K", 1.0));
    }

    #[test]
    fn two_swaps_forget() {
        // epochs start at 0: swaps due at 60 and 120, so at 125 both filters
        // have been retired.
        let mut d = vd(60.0);
        assert!(d.observe(b"K", 0.0));
        assert!(d.observe(b"K", 125.0));
    }

    #[test]
    fn one_swap_remembers() {
        let mut d = vd(60.0);
        assert!(d.observe(b"K", 0.0));
        assert!(!d.observe(b"K", 119.0));
    }

    #[test]
    fn contains_matches_observe_schedule() {
        let mut d = vd(10.0);
        d.observe(b"anchor", 0.0);
        d.observe(b"K", 7.0);
        // inserted in epoch [0,10): visible through 20, gone from 20 on
        assert!(d.contains(b"K", 7.0));
        assert!(d.contains(b"K", 19.999));
        assert!(!d.contains(b"K", 20.0));
        assert!(!d.contains(b"other", 7.0));
    }

    #[test]
    fn window_bounds_on_scripted_timelines() {
        let w = 30.0;
        for &insert_at in &[0.0, 0.5, 12.0, 29.9, 30.0, 47.3, 59.99] {
            let mut d = vd(w);
            d.observe(b"anchor", 0.0);
            d.observe(b"K", insert_at);
            let mut t = insert_at;
            let mut last_seen = insert_at;
            while t < insert_at + 3.0 * w {
                if d.contains(b"K", t) {
                    last_seen = t;
                }
                t += 0.01;
            }
            let visible = last_seen - insert_at;
            assert!(visible >= w - 0.011 && visible <= 2.0 * w, "insert {insert_at}: visible {visible}");
        }
    }

    #[test]
    fn threshold_swap() {
        let mut d = VariationDetector::new(HashConfig::new(3, 1 << 14, 1).unwrap(), DetectorPolicy::threshold(2)).unwrap();
        assert!(d.observe(b"a", 0.0));
        assert!(d.observe(b"b", 0.0));
        // third distinct insert swaps first: a and b move to previous
        assert!(d.observe(b"c", 0.0));
        assert!(!d.observe(b"a", 0.0));
        assert!(d.observe(b"d", 0.0));
        // second swap retired {a, b}; a was re-inserted into the filter that
        // is now previous, b is gone
        assert!(d.observe(b"b", 0.0));
    }

    #[test]
    fn swap_leaves_active_empty() {
        let mut d = vd(1.0);
        d.observe(b"K", 0.0);
        assert!(!d.active_is_empty());
        d.rotate_to(1.5);
        assert!(d.active_is_empty());
    }

    #[test]
    fn rejects_missing_policy() {
        let h = HashConfig::new(2, 64, 0).unwrap();
        assert!(VariationDetector::new(h, DetectorPolicy { window: None, swap_threshold: None }).is_err());
        assert!(VariationDetector::new(h, DetectorPolicy::window(0.0)).is_err());
    }
}
