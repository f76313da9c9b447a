//! Deterministic synthetic traces with ground truth.
//!
//! Every scenario is a pure function of its [`ScenarioSpec`]: the same spec
//! and seed always yield the same frames, timestamps and labels. Addresses
//! come from private and documentation ranges only:
//!
//! | range            | use                                   |
//! |------------------|---------------------------------------|
//! | 10.0.0.0/8       | monitored hosts and local servers     |
//! | 203.0.113.0/24   | public web servers (background)       |
//! | 198.51.100.0/24  | scan targets                          |
//! | 198.18.0.0/15    | spoofed flood sources                 |
//!
//! MAC addresses are `02:00:` followed by the IPv4 address.

mod background;
pub mod cases;

use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::packet::{dns_query, dns_response, tcp_frame, udp_frame, FrameSpec, TcpFlags};
use crate::pcap::{encode_trace, write_trace, Record, TraceError};
use crate::time::{secs_to_micros, Timestamp};

/// Scenario time zero: 2020-09-13T12:26:40Z.
pub const EPOCH: Timestamp = Timestamp(1_600_000_000_000_000);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Portknock,
    Ddos,
    Conficker,
    P2p,
    Entropy,
    Background,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 6] = [
        ScenarioKind::Portknock,
        ScenarioKind::Ddos,
        ScenarioKind::Conficker,
        ScenarioKind::P2p,
        ScenarioKind::Entropy,
        ScenarioKind::Background,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Portknock => "portknock",
            ScenarioKind::Ddos => "ddos",
            ScenarioKind::Conficker => "conficker",
            ScenarioKind::P2p => "p2p",
            ScenarioKind::Entropy => "entropy",
            ScenarioKind::Background => "background",
        }
    }

    fn default_duration(self) -> f64 {
        match self {
            ScenarioKind::Portknock => 300.0,
            ScenarioKind::Ddos => 1800.0,
            ScenarioKind::Conficker => 200.0,
            ScenarioKind::P2p => 400.0,
            ScenarioKind::Entropy => 10.0,
            ScenarioKind::Background => 600.0,
        }
    }

    /// Tunable rates and counts with their defaults.
    fn default_knobs(self) -> &'static [(&'static str, f64)] {
        match self {
            ScenarioKind::Portknock => &[("scan_rate", 100.0), ("scan_secs", 2.0), ("scan_start", 60.0)],
            ScenarioKind::Ddos => &[
                ("baseline_rate", 0.5),
                ("attack_start", 140.0),
                ("ramp_secs", 120.0),
                ("attack_rate_start", 10.0),
                ("attack_rate_peak", 30.0),
                ("attack_end", 480.0),
                ("client_rate", 0.2),
                ("late_client_start", 400.0),
            ],
            ScenarioKind::Conficker => &[
                ("idle_hosts", 3.0),
                ("c2_queries", 60.0),
                ("c2_nx_fraction", 0.8),
                ("scan_syns", 100.0),
                ("scan_answer_fraction", 0.1),
            ],
            ScenarioKind::P2p => &[("peers", 20.0), ("multi_port_peers", 5.0)],
            ScenarioKind::Entropy => &[("random_packets", 1000.0), ("text_packets", 1000.0)],
            ScenarioKind::Background => &[],
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = ScenarioError;
    fn from_str(s: &str) -> Result<Self, ScenarioError> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ScenarioError::UnknownScenario(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario `{0}` (expected portknock, ddos, conficker, p2p, entropy or background)")]
    UnknownScenario(String),
    #[error("scenario {scenario} has no knob `{knob}`")]
    UnknownKnob { scenario: ScenarioKind, knob: String },
    #[error("{0} must be a finite non-negative number")]
    BadValue(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub seed: u64,
    /// Seconds of traffic after [`EPOCH`].
    pub duration: f64,
    /// Hosts producing unrelated web and DNS traffic.
    pub background_hosts: usize,
    /// Mean sessions per second for each background host.
    pub background_rate: f64,
    pub knobs: BTreeMap<String, f64>,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, seed: u64) -> Self {
        ScenarioSpec {
            kind,
            seed,
            duration: kind.default_duration(),
            background_hosts: if kind == ScenarioKind::Entropy { 0 } else { 8 },
            background_rate: 0.1,
            knobs: kind.default_knobs().iter().map(|&(k, v)| (k.to_string(), v)).collect(),
        }
    }

    pub fn with_duration(mut self, secs: f64) -> Result<Self, ScenarioError> {
        if !(secs.is_finite() && secs >= 0.0) {
            return Err(ScenarioError::BadValue("duration".into()));
        }
        self.duration = secs;
        Ok(self)
    }

    pub fn with_knob(mut self, knob: &str, value: f64) -> Result<Self, ScenarioError> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(ScenarioError::BadValue(knob.into()));
        }
        match knob {
            "background_hosts" => self.background_hosts = value as usize,
            "background_rate" => self.background_rate = value,
            _ => match self.knobs.get_mut(knob) {
                Some(v) => *v = value,
                None => return Err(ScenarioError::UnknownKnob { scenario: self.kind, knob: knob.into() }),
            },
        }
        Ok(self)
    }

    fn knob(&self, name: &str) -> f64 {
        self.knobs[name]
    }
}

/// A packet the truth file points at: `index` into the trace, its exact
/// capture time and a scenario-specific label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPacket {
    pub index: usize,
    pub ts: Timestamp,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub epoch: Timestamp,
    pub duration: f64,
    pub packets: usize,
    /// First attack packet, when the scenario has one.
    pub attack_start: Option<Timestamp>,
    /// Address to role, e.g. `"10.2.0.66": "scanner"`.
    pub hosts: BTreeMap<String, String>,
    pub labeled: Vec<LabeledPacket>,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub records: Vec<Record>,
    pub truth: GroundTruth,
}

impl Trace {
    /// Writes the pcap and its sidecar; returns the sidecar path.
    pub fn write(&self, pcap: &Path) -> Result<PathBuf, ScenarioError> {
        write_trace(pcap, &self.records)?;
        let sidecar = truth_path(pcap);
        let mut json = serde_json::to_string_pretty(&self.truth).expect("truth serializes");
        json.push('\n');
        std::fs::write(&sidecar, json)?;
        Ok(sidecar)
    }

    pub fn pcap_bytes(&self) -> Vec<u8> {
        encode_trace(&self.records).expect("in-memory write cannot fail")
    }

    pub fn ts(&self, secs: f64) -> Timestamp {
        self.truth.epoch + secs_to_micros(secs)
    }
}

/// `trace.pcap` -> `trace.truth.json`.
pub fn truth_path(pcap: &Path) -> PathBuf {
    pcap.with_extension("truth.json")
}

pub fn generate(spec: &ScenarioSpec) -> Trace {
    let mut g = Gen::new(spec);
    match spec.kind {
        ScenarioKind::Portknock => cases::portknock(&mut g, spec),
        ScenarioKind::Ddos => cases::ddos(&mut g, spec),
        ScenarioKind::Conficker => cases::conficker(&mut g, spec),
        ScenarioKind::P2p => cases::p2p(&mut g, spec),
        ScenarioKind::Entropy => cases::entropy(&mut g, spec),
        ScenarioKind::Background => {}
    }
    background::add(&mut g, spec);
    g.finish(spec)
}

struct Pending {
    at: u64,
    seq: u64,
    frame: Vec<u8>,
    label: Option<String>,
}

/// Frame accumulator. Frames are emitted in time order; equal times keep
/// insertion order.
pub(crate) struct Gen {
    pub rng: ChaCha8Rng,
    pending: Vec<Pending>,
    seq: u64,
    ip_id: u16,
    hosts: BTreeMap<String, String>,
    attack_start: Option<u64>,
    duration_us: u64,
}

impl Gen {
    fn new(spec: &ScenarioSpec) -> Self {
        Gen {
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            pending: Vec::new(),
            seq: 0,
            ip_id: 0,
            hosts: BTreeMap::new(),
            attack_start: None,
            duration_us: secs_to_micros(spec.duration),
        }
    }

    pub fn host(&mut self, addr: Ipv4Addr, role: &str) {
        self.hosts.insert(addr.to_string(), role.to_string());
    }

    pub fn in_window(&self, t: f64) -> bool {
        t >= 0.0 && secs_to_micros(t) <= self.duration_us
    }

    pub fn spec(&mut self, src: Ipv4Addr, dst: Ipv4Addr) -> FrameSpec {
        self.ip_id = self.ip_id.wrapping_add(1);
        FrameSpec::new(src, dst).with_ip_id(self.ip_id)
    }

    /// Queues a frame at `t` seconds after the epoch. Frames past the
    /// scenario duration are discarded.
    pub fn push(&mut self, t: f64, frame: Vec<u8>, label: Option<&str>) {
        if !self.in_window(t) {
            return;
        }
        let at = secs_to_micros(t);
        self.seq += 1;
        self.pending.push(Pending { at, seq: self.seq, frame, label: label.map(str::to_string) });
    }

    /// Records `t` as the attack start if it is the earliest so far.
    pub fn mark_attack(&mut self, t: f64) {
        if !self.in_window(t) {
            return;
        }
        let at = secs_to_micros(t);
        self.attack_start = Some(self.attack_start.map_or(at, |s| s.min(at)));
    }

    pub fn syn(&mut self, t: f64, src: Ipv4Addr, dst: Ipv4Addr, sport: u16, dport: u16, label: Option<&str>) {
        let seq = self.rng.gen();
        let spec = self.spec(src, dst);
        self.push(t, tcp_frame(&spec, sport, dport, TcpFlags::SYN, seq, &[]), label);
    }

    pub fn tcp(&mut self, t: f64, src: Ipv4Addr, dst: Ipv4Addr, ports: (u16, u16), flags: TcpFlags, payload: &[u8]) {
        let seq = self.rng.gen();
        let spec = self.spec(src, dst);
        self.push(t, tcp_frame(&spec, ports.0, ports.1, flags, seq, payload), None);
    }

    /// SYN, SYNACK and ACK `rtt` apart.
    pub fn handshake(&mut self, t: f64, client: Ipv4Addr, server: Ipv4Addr, sport: u16, dport: u16, rtt: f64) {
        self.syn(t, client, server, sport, dport, None);
        self.tcp(t + rtt, server, client, (dport, sport), TcpFlags::SYN_ACK, &[]);
        self.tcp(t + 2.0 * rtt, client, server, (sport, dport), TcpFlags::ACK, &[]);
    }

    pub fn udp(&mut self, t: f64, src: Ipv4Addr, dst: Ipv4Addr, ports: (u16, u16), payload: &[u8], label: Option<&str>) {
        let spec = self.spec(src, dst);
        self.push(t, udp_frame(&spec, ports.0, ports.1, payload), label);
    }

    /// Query and its response `rtt` later. `rcode` 3 is NXDomain.
    #[allow(clippy::too_many_arguments)]
    pub fn lookup(
        &mut self,
        t: f64,
        client: Ipv4Addr,
        resolver: Ipv4Addr,
        qname: &str,
        qtype: u16,
        rcode: u8,
        rtt: f64,
        label: Option<&str>,
    ) {
        let id: u16 = self.rng.gen();
        let sport = self.ephemeral();
        let answers = if rcode == 0 { 1 } else { 0 };
        self.udp(t, client, resolver, (sport, 53), &dns_query(id, qname, qtype), label);
        let resp = dns_response(id, qname, qtype, rcode, answers);
        self.udp(t + rtt, resolver, client, (53, sport), &resp, label);
    }

    pub fn rng_index(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    pub fn ephemeral(&mut self) -> u16 {
        self.rng.gen_range(32768..=60999)
    }

    /// Exponential inter-arrival gap for a Poisson process of `rate`/s.
    pub fn gap(&mut self, rate: f64) -> f64 {
        let u: f64 = self.rng.gen_range(f64::EPSILON..1.0);
        -u.ln() / rate
    }

    fn finish(mut self, spec: &ScenarioSpec) -> Trace {
        self.pending.sort_by_key(|p| (p.at, p.seq));
        let mut records = Vec::with_capacity(self.pending.len());
        let mut labeled = Vec::new();
        for (index, p) in self.pending.into_iter().enumerate() {
            let ts = EPOCH + p.at;
            if let Some(label) = p.label {
                labeled.push(LabeledPacket { index, ts, label });
            }
            records.push(Record::new(ts, p.frame));
        }
        let truth = GroundTruth {
            scenario: spec.kind,
            seed: spec.seed,
            epoch: EPOCH,
            duration: spec.duration,
            packets: records.len(),
            attack_start: self.attack_start.map(|a| EPOCH + a),
            hosts: self.hosts,
            labeled,
        };
        Trace { records, truth }
    }
}

#[cfg(test)]
mod tests;
