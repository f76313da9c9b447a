use super::{HashConfig, SketchError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MonitorKind {
    /// Additive counting sketch, min query.
    Cbf,
    /// Time-decaying sketch: each cell decays as `exp(-dt / tau)` between
    /// touches, so a query returns an exponentially weighted sum.
    Tbf { tau: f64 },
}

/// Counting stage of a multi-hash metric.
///
/// Cell values are non-negative. TBF cells carry their own timestamp and are
/// decayed lazily when touched; queries decay on the fly without writing back.
#[derive(Debug, Clone)]
pub struct VariationMonitor {
    kind: MonitorKind,
    counters: Vec<f64>,
    stamps: Vec<f64>,
    hash: HashConfig,
}

impl VariationMonitor {
    pub fn new(kind: MonitorKind, hash: HashConfig) -> Result<Self, SketchError> {
        let stamps = match kind {
            MonitorKind::Cbf => Vec::new(),
            MonitorKind::Tbf { tau } if tau > 0.0 && tau.is_finite() => vec![0.0; hash.m],
            MonitorKind::Tbf { .. } => return Err(SketchError::BadTau),
        };
        Ok(VariationMonitor { kind, counters: vec![0.0; hash.m], stamps, hash })
    }

    pub fn kind(&self) -> MonitorKind {
        self.kind
    }

    pub fn hash(&self) -> &HashConfig {
        &self.hash
    }

    pub fn update(&mut self, mfk: &[u8], qty: f64, now: f64) {
        debug_assert!(qty.is_finite());
        match self.kind {
            MonitorKind::Cbf => {
                for i in self.hash.indices(mfk) {
                    self.counters[i] += qty;
                }
            }
            MonitorKind::Tbf { tau } => {
                for i in self.hash.indices(mfk) {
                    let decayed = decay(self.counters[i], now - self.stamps[i], tau);
                    self.counters[i] = decayed + qty;
                    self.stamps[i] = now;
                }
            }
        }
    }

    pub fn query(&self, mfk: &[u8], now: f64) -> f64 {
        let mut best = f64::INFINITY;
        match self.kind {
            MonitorKind::Cbf => {
                for i in self.hash.indices(mfk) {
                    best = best.min(self.counters[i]);
                }
            }
            MonitorKind::Tbf { tau } => {
                for i in self.hash.indices(mfk) {
                    best = best.min(decay(self.counters[i], now - self.stamps[i], tau));
                }
            }
        }
        best
    }

    /// Raw cell snapshot (value, stamp) for inspection in tests and tools.
    pub fn cell(&self, i: usize) -> (f64, Option<f64>) {
        (self.counters[i], self.stamps.get(i).copied())
    }
}

#[inline]
fn decay(value: f64, dt: f64, tau: f64) -> f64 {
    if value == 0.0 || dt <= 0.0 {
        value
    } else {
        value * (-dt / tau).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn big(seed: u64) -> HashConfig {
        HashConfig::new(3, 1 << 16, seed).unwrap()
    }

    #[test]
    fn cbf_is_additive() {
        let mut vm = VariationMonitor::new(MonitorKind::Cbf, big(1)).unwrap();
        vm.update(b"K", 3.0, 0.0);
        vm.update(b"K", 4.0, 5.0);
        assert_eq!(vm.query(b"K", 9.0), 7.0);
        for i in big(1).indices(b"K") {
            assert_eq!(vm.cell(i), (7.0, None));
        }
    }

    #[test]
    fn never_updated_is_zero() {
        let vm = VariationMonitor::new(MonitorKind::Tbf { tau: 240.0 }, big(2)).unwrap();
        assert_eq!(vm.query(b"nothing", 100.0), 0.0);
    }

    #[test]
    fn tbf_zero_elapsed() {
        let mut vm = VariationMonitor::new(MonitorKind::Tbf { tau: 240.0 }, big(3)).unwrap();
        vm.update(b"K", 100.0, 0.0);
        assert_eq!(vm.query(b"K", 0.0), 100.0);
    }

    #[test]
    fn tbf_one_time_constant() {
        let mut vm = VariationMonitor::new(MonitorKind::Tbf { tau: 240.0 }, big(4)).unwrap();
        vm.update(b"K", 100.0, 0.0);
        vm.update(b"K", 0.0, 240.0);
        let expect = 100.0 * (-1.0f64).exp();
        assert!((vm.query(b"K", 240.0) - expect).abs() < 1e-12);
        assert!((expect - 36.7879).abs() < 1e-4);
        for i in big(4).indices(b"K") {
            assert_eq!(vm.cell(i).1, Some(240.0));
        }
    }

    #[test]
    fn tbf_query_is_idempotent_and_read_only() {
        let mut vm = VariationMonitor::new(MonitorKind::Tbf { tau: 10.0 }, big(5)).unwrap();
        vm.update(b"K", 5.0, 1.0);
        let a = vm.query(b"K", 30.0);
        let b = vm.query(b"K", 30.0);
        assert_eq!(a.to_bits(), b.to_bits());
        for i in big(5).indices(b"K") {
            assert_eq!(vm.cell(i), (5.0, Some(1.0)));
        }
    }

    #[test]
    fn tbf_rejects_bad_tau() {
        assert!(VariationMonitor::new(MonitorKind::Tbf { tau: 0.0 }, big(0)).is_err());
    }
}
