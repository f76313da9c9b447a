//! The per-event pipeline.
//!
//! For each packet: advance the virtual clock (firing due timers first),
//! dissect, match the first event whose filter holds, identify the primary
//! key, resolve its state, run the state's metric operations, compute
//! features, evaluate decision entries in order and apply the first match.
//! Timer expiries run through the same pipeline as timeout events.

mod timeout;
mod verdict;

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

pub use timeout::{TimeoutManager, TimeoutRecord};
pub use verdict::{Alert, Disposition, RunCounters, Verdict};

use crate::packet::{dissect, render_key, uniform_entropy_stats, FieldId, PacketView};
use crate::program::{Action, CExpr, EvalError, EventKind, KeySpec, Mop, Program, Slot, Stat, TableRef, TableWrite};
use crate::sketch::{DLeftTable, Metric, SketchError};
use crate::time::{secs_to_micros, Timestamp};

const STATUS_SEED: u64 = 0x7374_6174_7573_0001;

/// Status-table entry. Default-state keys are never stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowStatus {
    pub state: usize,
    pub entered_at: Timestamp,
    pub last_seen: Timestamp,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("metric `{id}`: {source}")]
    Metric { id: String, source: SketchError },
    #[error("expected {expected} metrics, got {got}")]
    MetricCount { expected: usize, got: usize },
}

/// Bindings visible to expressions while one event is processed.
struct Scope<'s, 'p> {
    pv: Option<&'s PacketView<'p>>,
    key: &'s [u8],
    ctx: Option<&'s [Option<f64>]>,
    metrics: &'s [Option<f64>],
    features: &'s [Option<f64>],
    now: f64,
}

fn unbound(what: impl Into<String>) -> EvalError {
    EvalError::Unbound(what.into())
}

fn compose(spec: &KeySpec, pv: Option<&PacketView<'_>>, primary: &[u8]) -> Option<Vec<u8>> {
    match spec {
        KeySpec::Primary => Some(primary.to_vec()),
        KeySpec::Fields(fields) => {
            let mut out = Vec::with_capacity(16);
            pv?.append_flowkey(fields, &mut out).ok()?;
            Some(out)
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// A single-threaded engine instance. Independent instances over disjoint
/// primary-key partitions may run in parallel.
pub struct Engine {
    program: Arc<Program>,
    metrics: Vec<Box<dyn Metric>>,
    status: DLeftTable<FlowStatus>,
    tables: Vec<BTreeMap<Vec<u8>, f64>>,
    related: BTreeMap<Vec<u8>, Vec<u8>>,
    timers: TimeoutManager,
    timeout_event: Vec<Option<usize>>,
    clock: Timestamp,
    counters: RunCounters,
    event_hits: Vec<u64>,
    fired: Vec<Verdict>,
}

impl Engine {
    /// Builds the sketches the program declares.
    pub fn new(program: Program) -> Result<Engine, EngineError> {
        let metrics = program
            .metrics
            .iter()
            .map(|m| {
                let parent = m.chain.map(|p| program.metrics[p].id.clone());
                m.build(parent)
                    .map(|x| Box::new(x) as Box<dyn Metric>)
                    .map_err(|source| EngineError::Metric { id: m.id.clone(), source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::with_metrics(program, metrics)
    }

    /// Uses caller-supplied metric implementations, one per declared metric
    /// in declaration order.
    pub fn with_metrics(program: Program, metrics: Vec<Box<dyn Metric>>) -> Result<Engine, EngineError> {
        if metrics.len() != program.metrics.len() {
            return Err(EngineError::MetricCount { expected: program.metrics.len(), got: metrics.len() });
        }
        let timeout_event = (0..program.timeouts.len())
            .map(|t| program.events.iter().position(|e| matches!(e.kind, EventKind::Timeout { timeout } if timeout == t)))
            .collect();
        Ok(Engine {
            status: DLeftTable::with_capacity(program.status_capacity, STATUS_SEED),
            tables: vec![BTreeMap::new(); program.tables.len()],
            related: BTreeMap::new(),
            timers: TimeoutManager::new(),
            timeout_event,
            clock: Timestamp::ZERO,
            counters: RunCounters::default(),
            event_hits: vec![0; program.events.len()],
            fired: Vec::new(),
            metrics,
            program: Arc::new(program),
        })
    }

    pub fn program(&self) -> &Program {
        &self.program
    }

    pub fn clock(&self) -> Timestamp {
        self.clock
    }

    pub fn counters(&self) -> RunCounters {
        let mut c = self.counters.clone();
        c.events = self.program.events.iter().zip(&self.event_hits).map(|(e, &n)| (e.id.clone(), n)).collect();
        c
    }

    /// State of `key`; keys without an entry are in the default state.
    pub fn resolve_status(&self, key: &[u8]) -> &str {
        let s = self.status.get(key).map_or(self.program.default_state, |f| f.state);
        &self.program.states[s].name
    }

    pub fn flow_status(&self, key: &[u8]) -> Option<&FlowStatus> {
        self.status.get(key)
    }

    /// Status entries in table order.
    pub fn status_entries(&self) -> impl Iterator<Item = (&[u8], &FlowStatus)> {
        self.status.iter()
    }

    /// Number of stored keys per state name.
    pub fn census(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for (_, s) in self.status.iter() {
            *out.entry(self.program.states[s.state].name.clone()).or_default() += 1;
        }
        out
    }

    pub fn table_value(&self, table: &str, key: &[u8]) -> Option<f64> {
        let t = self.program.tables.iter().position(|x| x == table)?;
        self.tables[t].get(key).copied()
    }

    pub fn related_entry(&self, key: &[u8]) -> Option<&[u8]> {
        self.related.get(key).map(Vec::as_slice)
    }

    pub fn pending_timeouts(&self) -> impl Iterator<Item = &TimeoutRecord> {
        self.timers.iter()
    }

    /// Verdicts of timeout events fired during `process_packet` calls since
    /// the last drain, in firing order.
    pub fn take_fired(&mut self) -> Vec<Verdict> {
        std::mem::take(&mut self.fired)
    }

    /// First packet event whose filter holds and whose key is composable.
    pub fn match_event(&self, pv: &PacketView<'_>) -> Option<usize> {
        self.match_with_key(pv).map(|(e, _)| e)
    }

    /// The matched event's own primary key for a raw frame, ignoring the
    /// related table. Used to partition traffic across instances.
    pub fn routing_key(&self, raw: &[u8], ts: Timestamp) -> Option<Vec<u8>> {
        let pv = dissect(raw, ts).ok()?;
        self.match_with_key(&pv).map(|(_, k)| k)
    }

    fn match_with_key(&self, pv: &PacketView<'_>) -> Option<(usize, Vec<u8>)> {
        let scope = Scope { pv: Some(pv), key: &[], ctx: None, metrics: &[], features: &[], now: self.clock.as_secs_f64() };
        let mut key = Vec::with_capacity(16);
        for (i, e) in self.program.events.iter().enumerate() {
            let EventKind::Packet { filter, key: fields, .. } = &e.kind else {
                continue;
            };
            if !self.eval(filter, &scope).is_ok_and(|v| v != 0.0) {
                continue;
            }
            key.clear();
            if pv.append_flowkey(fields, &mut key).is_ok() {
                return Some((i, key));
            }
        }
        None
    }

    /// Primary key stored in the related table for this packet, if the
    /// event declares a related lookup and an entry exists.
    pub fn resolve_related(&self, pv: &PacketView<'_>, event: usize) -> Option<Vec<u8>> {
        let EventKind::Packet { related: Some(fields), .. } = &self.program.events[event].kind else {
            return None;
        };
        let mut k = Vec::with_capacity(16);
        pv.append_flowkey(fields, &mut k).ok()?;
        self.related.get(&k).cloned()
    }

    /// Registers timer `name` for `key`, `delay` seconds from now. Returns
    /// false for an unknown name or a non-positive delay.
    pub fn schedule_timeout(&mut self, name: &str, key: &[u8], delay: f64, ctx: &[(&str, f64)]) -> bool {
        let Some(timeout) = self.program.timeouts.iter().position(|t| t == name) else {
            return false;
        };
        let us = secs_to_micros(delay);
        if us == 0 {
            return false;
        }
        let mut record = self.new_record(timeout, key, self.clock + us, None);
        for (n, v) in ctx {
            if let Some(i) = self.program.ctx_names.iter().position(|c| c == n) {
                record.ctx[i] = Some(*v);
            }
        }
        self.timers.set(record);
        true
    }

    fn new_record(&self, timeout: usize, key: &[u8], expiry: Timestamp, key_fields: Option<Vec<FieldId>>) -> TimeoutRecord {
        TimeoutRecord { timeout, expiry, key: key.to_vec(), ctx: vec![None; self.program.ctx_names.len()], key_fields }
    }

    /// Fires every timer with expiry at or before `to`, in expiry order, and
    /// moves the clock to `to`. Never rewinds the clock.
    pub fn advance_clock(&mut self, to: Timestamp) -> Vec<Verdict> {
        let mut out = Vec::new();
        while let Some(record) = self.timers.pop_due(to) {
            self.clock = self.clock.max(record.expiry);
            self.counters.timeouts_fired += 1;
            let Some(ev) = self.timeout_event[record.timeout] else {
                self.counters.timeouts_unhandled += 1;
                continue;
            };
            let TimeoutRecord { key, ctx, key_fields, .. } = record;
            out.push(self.run_event(ev, key, key_fields, None, Some(&ctx)));
        }
        self.clock = self.clock.max(to);
        out
    }

    /// Runs one captured frame through the pipeline.
    pub fn process_packet(&mut self, raw: &[u8], ts: Timestamp) -> Verdict {
        self.counters.packets += 1;
        let ts = if ts < self.clock {
            self.counters.clamped_timestamps += 1;
            self.clock
        } else {
            ts
        };
        let fired = self.advance_clock(ts);
        self.fired.extend(fired);

        let pv = match dissect(raw, ts) {
            Ok(pv) => pv,
            Err(_) => {
                self.counters.malformed += 1;
                return Verdict { clock: self.clock, ..Verdict::default() };
            }
        };
        let Some((ev, own_key)) = self.match_with_key(&pv) else {
            self.counters.unmatched += 1;
            return Verdict { clock: self.clock, ..Verdict::default() };
        };
        self.counters.matched += 1;
        let (key, fields) = match self.resolve_related(&pv, ev) {
            Some(k) => (k, None),
            None => match &self.program.events[ev].kind {
                EventKind::Packet { key: f, .. } => (own_key, Some(f.clone())),
                EventKind::Timeout { .. } => unreachable!("only packet events match packets"),
            },
        };
        self.run_event(ev, key, fields, Some(&pv), None)
    }

    fn eval(&self, e: &CExpr, s: &Scope<'_, '_>) -> Result<f64, EvalError> {
        e.eval(&mut |slot: &Slot| match *slot {
            Slot::Metric(m) => s.metrics.get(m).copied().flatten().ok_or_else(|| unbound(&self.program.metrics[m].id)),
            Slot::Feature(f) => s.features.get(f).copied().flatten().ok_or_else(|| unbound(&self.program.features[f].id)),
            Slot::Field(f) => {
                let pv = s.pv.ok_or_else(|| unbound(f.name()))?;
                pv.field_f64(f).map_err(|_| unbound(f.name()))
            }
            Slot::Stat(st) => {
                let pv = s.pv.ok_or_else(|| unbound(st.name()))?;
                let stats = pv.payload_stats().map_err(|_| unbound(st.name()))?;
                Ok(match st {
                    Stat::Popcount => stats.n1 as f64,
                    Stat::Bits => stats.n_bits as f64,
                    Stat::Printable => stats.printable_fraction,
                    Stat::Entropy => stats.bit_entropy,
                    Stat::UniformMean => uniform_entropy_stats(pv.payload().len()).0,
                    Stat::UniformSigma => uniform_entropy_stats(pv.payload().len()).1,
                })
            }
            Slot::Table(t) => Ok(self.tables[t].get(s.key).copied().unwrap_or(0.0)),
            Slot::Ctx(c) => s
                .ctx
                .and_then(|ctx| ctx.get(c).copied().flatten())
                .ok_or_else(|| unbound(format!("ctx[{}]", self.program.ctx_names[c]))),
            Slot::Now => Ok(s.now),
        })
    }

    fn set_status(&mut self, key: &[u8], state: usize) {
        if state == self.program.default_state {
            self.status.remove(key);
            return;
        }
        let clock = self.clock;
        if let Some(entry) = self.status.get_mut(key) {
            if entry.state != state {
                entry.state = state;
                entry.entered_at = clock;
            }
            entry.last_seen = clock;
            return;
        }
        if self.status.put(key, FlowStatus { state, entered_at: clock, last_seen: clock }).is_err() {
            self.counters.table_full += 1;
        }
    }

    fn run_event(
        &mut self,
        ev: usize,
        key: Vec<u8>,
        key_fields: Option<Vec<FieldId>>,
        pv: Option<&PacketView<'_>>,
        ctx: Option<&[Option<f64>]>,
    ) -> Verdict {
        let program = Arc::clone(&self.program);
        self.event_hits[ev] += 1;
        let now = self.clock.as_secs_f64();
        let state = self.status.get(&key).map_or(program.default_state, |f| f.state);
        let state_name = program.states[state].name.clone();
        let mut verdict = Verdict {
            event: Some(program.events[ev].id.clone()),
            state_before: Some(state_name.clone()),
            state_after: Some(state_name.clone()),
            clock: self.clock,
            from_timeout: pv.is_none(),
            ..Verdict::default()
        };
        let Some(handler) = program.states[state].handlers[ev].as_ref() else {
            if let Some(entry) = self.status.get_mut(&key) {
                entry.last_seen = self.clock;
            }
            verdict.key = Some(key);
            return verdict;
        };

        // Measurement: metric operations in declaration order.
        let mut mvals: Vec<Option<f64>> = vec![None; program.metrics.len()];
        let mut updated = vec![false; program.metrics.len()];
        for mop in &handler.mops {
            match mop {
                Mop::Set { metric, dfk, mfk, qty } => {
                    let (Some(d), Some(m)) = (compose(dfk, pv, &key), compose(mfk, pv, &key)) else {
                        self.counters.mop_key_unavailable += 1;
                        continue;
                    };
                    let chained_out = program.metrics[*metric].chain.is_some_and(|p| !updated[p]);
                    if chained_out {
                        self.counters.chain_suppressed += 1;
                    } else {
                        let scope = Scope { pv, key: &key, ctx, metrics: &[], features: &[], now };
                        match self.eval(qty, &scope) {
                            Ok(q) if q >= 0.0 => updated[*metric] = self.metrics[*metric].set(&d, &m, q, now),
                            _ => self.counters.action_errors += 1,
                        }
                    }
                    mvals[*metric] = Some(self.metrics[*metric].get(&m, now));
                }
                Mop::Get { metric, key: spec } => match compose(spec, pv, &key) {
                    Some(k) => mvals[*metric] = Some(self.metrics[*metric].get(&k, now)),
                    None => self.counters.mop_key_unavailable += 1,
                },
            }
        }

        // Features in dependency order; unbound inputs leave a feature unset.
        let mut fvals: Vec<Option<f64>> = vec![None; program.features.len()];
        for &f in &program.feature_order {
            let scope = Scope { pv, key: &key, ctx, metrics: &mvals, features: &fvals, now };
            fvals[f] = match self.eval(&program.features[f].expr, &scope) {
                Ok(v) => Some(v),
                Err(EvalError::Unbound(_)) => None,
                Err(_) => {
                    self.counters.feature_errors += 1;
                    Some(0.0)
                }
            };
        }

        // Decision: the first entry whose condition holds.
        let scope = Scope { pv, key: &key, ctx, metrics: &mvals, features: &fvals, now };
        let mut chosen = None;
        for d in &handler.decisions {
            match self.eval(&d.when, &scope) {
                Ok(v) if v != 0.0 => {
                    chosen = Some(d);
                    break;
                }
                Ok(_) => {}
                Err(_) => self.counters.condition_errors += 1,
            }
        }
        let Some(decision) = chosen else {
            if let Some(entry) = self.status.get_mut(&key) {
                entry.last_seen = self.clock;
            }
            verdict.features = fvals;
            verdict.key = Some(key);
            return verdict;
        };
        let next = decision.next.unwrap_or(state);
        let next_name = &program.states[next].name;
        let rendered = key_fields.as_deref().and_then(|f| render_key(f, &key));

        for action in &decision.actions {
            let scope = Scope { pv, key: &key, ctx, metrics: &mvals, features: &fvals, now };
            match action {
                Action::SetTimeout { timeout, delay } | Action::UpdateTimeout { timeout, delay } => {
                    let us = match self.eval(delay, &scope) {
                        Ok(d) => secs_to_micros(d),
                        Err(_) => 0,
                    };
                    if us == 0 {
                        self.counters.action_errors += 1;
                        continue;
                    }
                    let expiry = self.clock + us;
                    if matches!(action, Action::SetTimeout { .. }) {
                        let record = self.new_record(*timeout, &key, expiry, key_fields.clone());
                        self.timers.set(record);
                    } else if !self.timers.rearm(*timeout, &key, expiry) {
                        self.counters.missing_timeouts += 1;
                    }
                }
                Action::SaveTimeoutCtx { timeout, items } => {
                    let values: Vec<(usize, Result<f64, EvalError>)> = items.iter().map(|(i, e)| (*i, self.eval(e, &scope))).collect();
                    let Some(record) = self.timers.get_mut(*timeout, &key) else {
                        self.counters.missing_timeouts += 1;
                        continue;
                    };
                    let mut failed = 0;
                    for (i, v) in values {
                        match v {
                            Ok(v) => record.ctx[i] = Some(v),
                            Err(_) => failed += 1,
                        }
                    }
                    self.counters.action_errors += failed;
                }
                Action::Drop => verdict.disposition = Disposition::Drop,
                Action::Allow => verdict.disposition = Disposition::Allow,
                Action::Mark(tag) => verdict.disposition = Disposition::Mark(tag.clone()),
                Action::NextStatus { key: spec, state } => match compose(spec, pv, &key) {
                    Some(k) => self.set_status(&k, *state),
                    None => self.counters.action_errors += 1,
                },
                Action::UpdateTable { table, key: spec, write } => {
                    let Some(k) = compose(spec, pv, &key) else {
                        self.counters.action_errors += 1;
                        continue;
                    };
                    match (table, write) {
                        (TableRef::Secondary(t), TableWrite::Value(e)) => match self.eval(e, &scope) {
                            Ok(v) => {
                                self.tables[*t].insert(k, v);
                            }
                            Err(_) => self.counters.action_errors += 1,
                        },
                        (TableRef::Secondary(t), TableWrite::Delete) => {
                            self.tables[*t].remove(&k);
                        }
                        (TableRef::Related, TableWrite::PrimaryKey) => {
                            self.related.insert(k, key.clone());
                        }
                        (TableRef::Related, TableWrite::Delete) => {
                            self.related.remove(&k);
                        }
                        _ => unreachable!("rejected at compile time"),
                    }
                }
                Action::Print { .. } | Action::Export { .. } => {}
            }
            if let Some(alert) = self.alert_for(action, &scope, ev, &key, &rendered, &state_name, next_name, &program) {
                self.counters.alerts += 1;
                verdict.alerts.push(alert);
            }
        }

        match decision.next {
            Some(n) => self.set_status(&key, n),
            None => {
                if let Some(entry) = self.status.get_mut(&key) {
                    entry.last_seen = self.clock;
                }
            }
        }
        verdict.state_after = Some(next_name.clone());
        verdict.features = fvals;
        verdict.key = Some(key);
        verdict
    }

    #[allow(clippy::too_many_arguments)]
    fn alert_for(
        &mut self,
        action: &Action,
        scope: &Scope<'_, '_>,
        ev: usize,
        key: &[u8],
        rendered: &Option<String>,
        before: &str,
        after: &str,
        program: &Program,
    ) -> Option<Alert> {
        let (kind, message, items) = match action {
            Action::Print { message, items } => ("PRINT", Some(message.clone()), Some(items)),
            Action::Export { items } => ("EXPORT", None, items.as_ref()),
            _ => return None,
        };
        let mut features = BTreeMap::new();
        match items {
            Some(items) => {
                for it in items {
                    match self.eval(&it.expr, scope) {
                        Ok(v) => {
                            features.insert(it.name.clone(), v);
                        }
                        Err(_) => self.counters.action_errors += 1,
                    }
                }
            }
            None => {
                for (f, v) in program.features.iter().zip(scope.features) {
                    if let Some(v) = v {
                        features.insert(f.id.clone(), *v);
                    }
                }
            }
        }
        Some(Alert {
            program: program.name.clone(),
            event: program.events[ev].id.clone(),
            clock: self.clock.to_string(),
            key_hex: hex(key),
            key: rendered.clone(),
            state_before: before.to_string(),
            state_after: after.to_string(),
            action: kind.to_string(),
            message,
            features,
        })
    }
}
