use super::{SketchError, VariationDetector, VariationMonitor};

/// Set/get interface the engine drives for every metric.
///
/// `set` reports whether the metric counts as *updated* for this packet,
/// which is what chained metrics key off.
pub trait Metric: Send {
    fn set(&mut self, dfk: &[u8], mfk: &[u8], qty: f64, now: f64) -> bool;
    fn get(&self, key: &[u8], now: f64) -> f64;
}

/// The composite MH metric: an optional detector gating an optional monitor.
///
/// | detector | monitor | `get` returns                               |
/// |----------|---------|---------------------------------------------|
/// | yes      | yes     | monitor value, updated once per distinct DFK |
/// | no       | yes     | monitor value, updated on every set          |
/// | yes      | no      | 1 if the key is in the detector window, else 0 |
#[derive(Debug, Clone)]
pub struct MultiHashMetric {
    id: String,
    vd: Option<VariationDetector>,
    vm: Option<VariationMonitor>,
    chain_parent: Option<String>,
}

impl MultiHashMetric {
    pub fn new(
        id: impl Into<String>,
        vd: Option<VariationDetector>,
        vm: Option<VariationMonitor>,
        chain_parent: Option<String>,
    ) -> Result<Self, SketchError> {
        let id = id.into();
        if vd.is_none() && vm.is_none() {
            return Err(SketchError::EmptyMetric(id));
        }
        Ok(MultiHashMetric { id, vd, vm, chain_parent })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn chain_parent(&self) -> Option<&str> {
        self.chain_parent.as_deref()
    }

    pub fn detector(&self) -> Option<&VariationDetector> {
        self.vd.as_ref()
    }

    pub fn monitor(&self) -> Option<&VariationMonitor> {
        self.vm.as_ref()
    }
}

impl Metric for MultiHashMetric {
    fn set(&mut self, dfk: &[u8], mfk: &[u8], qty: f64, now: f64) -> bool {
        let fresh = match self.vd.as_mut() {
            Some(vd) => vd.observe(dfk, now),
            None => true,
        };
        if fresh {
            if let Some(vm) = self.vm.as_mut() {
                vm.update(mfk, qty, now);
            }
        }
        fresh
    }

    fn get(&self, key: &[u8], now: f64) -> f64 {
        match (&self.vm, &self.vd) {
            (Some(vm), _) => vm.query(key, now),
            (None, Some(vd)) => {
                if vd.contains(key, now) {
                    1.0
                } else {
                    0.0
                }
            }
            (None, None) => unreachable!("constructor rejects empty metrics"),
        }
    }
}
