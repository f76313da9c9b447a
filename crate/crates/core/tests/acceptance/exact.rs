//! Exact reference metrics: associative maps in place of sketches.
//!
//! Same set/get contract as the multi-hash metric, but membership and
//! counts are kept per key, so there are no hash collisions to absorb.

use std::collections::HashMap;

use xfsmon::program::{MetricSpec, Program};
use xfsmon::sketch::{Metric, MonitorKind};

/// Key visible while its last insertion is in the current or the previous
/// window epoch. Epochs are anchored at the first insertion.
struct ExactWindow {
    window: f64,
    anchor: Option<f64>,
    last_epoch: HashMap<Vec<u8>, i64>,
}

impl ExactWindow {
    fn epoch(&self, now: f64) -> Option<i64> {
        self.anchor.map(|a| ((now - a) / self.window).floor() as i64)
    }

    fn visible(&self, key: &[u8], now: f64) -> bool {
        match (self.epoch(now), self.last_epoch.get(key)) {
            (Some(e), Some(&last)) => last >= e - 1,
            _ => false,
        }
    }

    fn observe(&mut self, key: &[u8], now: f64) -> bool {
        self.anchor.get_or_insert(now);
        let fresh = !self.visible(key, now);
        let e = self.epoch(now).expect("anchored");
        self.last_epoch.insert(key.to_vec(), e);
        fresh
    }
}

/// Per-key value; decayed values carry the time of their last touch.
struct ExactCounter {
    tau: Option<f64>,
    values: HashMap<Vec<u8>, (f64, f64)>,
}

impl ExactCounter {
    fn value(&self, key: &[u8], now: f64) -> f64 {
        match (self.values.get(key), self.tau) {
            (None, _) => 0.0,
            (Some(&(v, _)), None) => v,
            (Some(&(v, at)), Some(tau)) => v * (-(now - at).max(0.0) / tau).exp(),
        }
    }

    fn add(&mut self, key: &[u8], qty: f64, now: f64) {
        let v = self.value(key, now) + qty;
        self.values.insert(key.to_vec(), (v, now));
    }
}

pub struct ExactMetric {
    window: Option<ExactWindow>,
    counter: Option<ExactCounter>,
}

impl ExactMetric {
    pub fn from_spec(spec: &MetricSpec) -> ExactMetric {
        let window = spec.vd.as_ref().map(|d| {
            assert!(d.swap_threshold.is_none(), "exact reference supports window detectors only");
            ExactWindow { window: d.window.expect("window"), anchor: None, last_epoch: HashMap::new() }
        });
        let counter = spec.vm.as_ref().map(|m| ExactCounter {
            tau: match m.kind {
                MonitorKind::Cbf => None,
                MonitorKind::Tbf { tau } => Some(tau),
            },
            values: HashMap::new(),
        });
        ExactMetric { window, counter }
    }
}

impl Metric for ExactMetric {
    fn set(&mut self, dfk: &[u8], mfk: &[u8], qty: f64, now: f64) -> bool {
        let fresh = self.window.as_mut().map_or(true, |w| w.observe(dfk, now));
        if fresh {
            if let Some(c) = self.counter.as_mut() {
                c.add(mfk, qty, now);
            }
        }
        fresh
    }

    fn get(&self, key: &[u8], now: f64) -> f64 {
        match (&self.counter, &self.window) {
            (Some(c), _) => c.value(key, now),
            (None, Some(w)) => f64::from(u8::from(w.visible(key, now))),
            (None, None) => unreachable!("metric without stages"),
        }
    }
}

pub fn exact_metrics(program: &Program) -> Vec<Box<dyn Metric>> {
    program.metrics.iter().map(|m| Box::new(ExactMetric::from_spec(m)) as Box<dyn Metric>).collect()
}
