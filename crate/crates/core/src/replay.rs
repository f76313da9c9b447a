//! Trace replay over one or more engine instances.
//!
//! With several shards each instance owns the primary keys whose hash maps
//! to it; frames that match no event go to shard 0. Before every frame all
//! shards advance to its timestamp, so timeout verdicts from any shard are
//! emitted before the frame's own verdict and the output is in clock order.
//! Related-table entries are shard-local: a frame whose own key routes to a
//! different shard than the key it relates to is not redirected.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::Serialize;

use crate::engine::{Alert, Engine, EngineError, RunCounters, Verdict};
use crate::pcap::Record;
use crate::program::Program;
use crate::sketch::mix64;
use crate::time::Timestamp;

pub struct Replayer {
    shards: Vec<Engine>,
}

impl Replayer {
    pub fn new(program: Program, shards: usize) -> Result<Replayer, EngineError> {
        let n = shards.max(1);
        let shards = (0..n).map(|_| Engine::new(program.clone())).collect::<Result<_, _>>()?;
        Ok(Replayer { shards })
    }

    pub fn from_engine(engine: Engine) -> Replayer {
        Replayer { shards: vec![engine] }
    }

    pub fn shards(&self) -> &[Engine] {
        &self.shards
    }

    fn route(&self, rec: &Record) -> usize {
        let n = self.shards.len();
        if n == 1 {
            return 0;
        }
        match self.shards[0].routing_key(&rec.data, rec.ts) {
            Some(k) => {
                let h = k.iter().fold(0x9e37_79b9_7f4a_7c15u64, |h, &b| mix64(h ^ b as u64));
                (h % n as u64) as usize
            }
            None => 0,
        }
    }

    /// Processes one frame; `sink` sees every verdict it causes, timeouts
    /// first.
    pub fn push(&mut self, rec: &Record, sink: &mut impl FnMut(&Verdict)) {
        let target = self.route(rec);
        if self.shards.len() > 1 {
            let mut fired: Vec<Verdict> = Vec::new();
            for e in &mut self.shards {
                fired.extend(e.advance_clock(rec.ts));
            }
            fired.sort_by_key(|v| v.clock);
            fired.iter().for_each(&mut *sink);
        }
        let e = &mut self.shards[target];
        let v = e.process_packet(&rec.data, rec.ts);
        e.take_fired().iter().for_each(&mut *sink);
        sink(&v);
    }

    pub fn counters(&self) -> RunCounters {
        let mut c = RunCounters::default();
        for e in &self.shards {
            c.merge(&e.counters());
        }
        c
    }

    pub fn census(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for e in &self.shards {
            for (s, n) in e.census() {
                *out.entry(s).or_default() += n;
            }
        }
        out
    }

    /// Current state name of `key` in the shard that owns it.
    pub fn resolve_status(&self, key: &[u8]) -> String {
        self.shards
            .iter()
            .find_map(|e| e.flow_status(key).map(|_| e.resolve_status(key).to_string()))
            .unwrap_or_else(|| self.shards[0].program().default_state_name().to_string())
    }
}

/// Serializes an alert as one JSON line, newline included.
pub fn alert_line(a: &Alert) -> String {
    let mut s = serde_json::to_string(a).expect("alerts serialize");
    s.push('\n');
    s
}

/// Summary of a replay; see [`RunReport::from_run`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub program: String,
    pub shards: usize,
    pub packets: u64,
    pub matched: u64,
    pub unmatched: u64,
    pub malformed: u64,
    pub events: BTreeMap<String, u64>,
    pub alerts: u64,
    /// Non-default states only; absent keys are in the default state.
    pub census: BTreeMap<String, usize>,
    pub first_ts: Option<Timestamp>,
    pub last_ts: Option<Timestamp>,
    pub wall_secs: f64,
    pub packets_per_sec: f64,
    pub counters: RunCounters,
}

impl RunReport {
    pub fn from_run(r: &Replayer, span: Option<(Timestamp, Timestamp)>, wall_secs: f64) -> RunReport {
        let c = r.counters();
        RunReport {
            program: r.shards[0].program().name.clone(),
            shards: r.shards.len(),
            packets: c.packets,
            matched: c.matched,
            unmatched: c.unmatched,
            malformed: c.malformed,
            events: c.events.clone(),
            alerts: c.alerts,
            census: r.census(),
            first_ts: span.map(|s| s.0),
            last_ts: span.map(|s| s.1),
            wall_secs,
            packets_per_sec: if wall_secs > 0.0 { c.packets as f64 / wall_secs } else { 0.0 },
            counters: c,
        }
    }
}

/// Everything a replay produced, kept in memory.
#[derive(Debug, Default)]
pub struct Collected {
    pub verdicts: Vec<Verdict>,
    pub alert_text: String,
}

impl Collected {
    pub fn alerts(&self) -> impl Iterator<Item = &Alert> {
        self.verdicts.iter().flat_map(|v| v.alerts.iter())
    }

    /// Verdicts for `key` that changed its state, in order.
    pub fn transitions_of<'a>(&'a self, key: &'a [u8]) -> impl Iterator<Item = &'a Verdict> + 'a {
        self.verdicts.iter().filter(move |v| v.key.as_deref() == Some(key) && v.transitioned())
    }
}

/// Replays `records` through a fresh single instance of `program`.
pub fn replay_all(program: Program, records: &[Record]) -> (Replayer, Collected) {
    let mut r = Replayer::new(program, 1).expect("program metrics build");
    let out = replay_into(&mut r, records);
    (r, out)
}

pub fn replay_into(r: &mut Replayer, records: &[Record]) -> Collected {
    let mut out = Collected::default();
    for rec in records {
        r.push(rec, &mut |v| {
            for a in &v.alerts {
                out.alert_text.push_str(&alert_line(a));
            }
            out.verdicts.push(v.clone());
        });
    }
    out
}

/// Streams alert lines to `w` while replaying.
pub fn replay_to_writer<W: Write>(
    r: &mut Replayer,
    records: impl IntoIterator<Item = Record>,
    w: &mut W,
) -> io::Result<Option<(Timestamp, Timestamp)>> {
    let mut span: Option<(Timestamp, Timestamp)> = None;
    let mut err = None;
    for rec in records {
        span = Some(match span {
            None => (rec.ts, rec.ts),
            Some((a, _)) => (a, rec.ts),
        });
        r.push(&rec, &mut |v| {
            for a in &v.alerts {
                if err.is_none() {
                    if let Err(e) = w.write_all(alert_line(a).as_bytes()) {
                        err = Some(e);
                    }
                }
            }
        });
        if let Some(e) = err.take() {
            return Err(e);
        }
    }
    Ok(span)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::builtin;
    use crate::scenario::{generate, ScenarioKind, ScenarioSpec};

    #[test]
    fn one_shard_matches_plain_engine() {
        let trace = generate(&ScenarioSpec::new(ScenarioKind::Portknock, 1));
        let program = builtin("portknock").unwrap().compile();
        let mut e = Engine::new(program.clone()).unwrap();
        let mut plain = Vec::new();
        for r in &trace.records {
            let v = e.process_packet(&r.data, r.ts);
            plain.extend(e.take_fired());
            plain.push(v);
        }
        let (_, got) = replay_all(program, &trace.records);
        assert_eq!(got.verdicts, plain);
    }

    #[test]
    fn shards_agree_on_alerts_for_host_keyed_programs() {
        for name in ["portknock", "conficker", "ddos"] {
            let trace = generate(&ScenarioSpec::new(name.parse().unwrap(), 2));
            let program = builtin(name).unwrap().compile();
            let (one, a) = replay_all(program.clone(), &trace.records);
            let mut four = Replayer::new(program, 4).unwrap();
            let b = replay_into(&mut four, &trace.records);
            let mut la: Vec<&str> = a.alert_text.lines().collect();
            let mut lb: Vec<&str> = b.alert_text.lines().collect();
            la.sort_unstable();
            lb.sort_unstable();
            assert_eq!(la, lb, "{name}");
            assert_eq!(one.census(), four.census(), "{name}");
            assert_eq!(one.counters().packets, four.counters().packets);
        }
    }

    #[test]
    fn report_accounts_for_every_packet() {
        let trace = generate(&ScenarioSpec::new(ScenarioKind::Background, 1).with_duration(60.0).unwrap());
        let (r, _) = replay_all(builtin("ddos").unwrap().compile(), &trace.records);
        let rep = RunReport::from_run(&r, None, 0.0);
        assert_eq!(rep.packets, rep.matched + rep.unmatched + rep.malformed);
        assert_eq!(rep.packets as usize, trace.records.len());
    }

    #[test]
    fn writer_streams_the_same_lines() {
        let trace = generate(&ScenarioSpec::new(ScenarioKind::Portknock, 3));
        let program = builtin("portknock").unwrap().compile();
        let (_, c) = replay_all(program.clone(), &trace.records);
        let mut r = Replayer::new(program, 1).unwrap();
        let mut buf = Vec::new();
        let span = replay_to_writer(&mut r, trace.records.clone(), &mut buf).unwrap().unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), c.alert_text);
        assert_eq!(span, (trace.records[0].ts, trace.records.last().unwrap().ts));
    }
}
