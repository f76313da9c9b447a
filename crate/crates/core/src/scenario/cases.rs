//! One generator per use case. Times are seconds after the epoch.

use std::net::Ipv4Addr;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{Gen, ScenarioSpec};
use crate::packet::TcpFlags;

const PSH_ACK: TcpFlags = TcpFlags(TcpFlags::PSH.0 | TcpFlags::ACK.0);

pub mod portknock {
    use std::net::Ipv4Addr;

    pub const SERVER: Ipv4Addr = Ipv4Addr::new(10, 2, 0, 1);
    /// Knocks 5000, 4000, 7000 one second apart from t=10, then SSH at 13.
    pub const KNOCKER: Ipv4Addr = Ipv4Addr::new(10, 2, 0, 10);
    /// Knocks 5000 at t=30 and comes back six seconds later.
    pub const SLOW: Ipv4Addr = Ipv4Addr::new(10, 2, 0, 11);
    pub const SCANNER: Ipv4Addr = Ipv4Addr::new(10, 2, 0, 66);
    pub const SSH_AT: f64 = 13.0;
    pub const SLOW_KNOCK_AT: f64 = 30.0;
    pub const SLOW_RETURN_AT: f64 = 36.0;
}

pub(super) fn portknock(g: &mut Gen, spec: &ScenarioSpec) {
    use portknock::*;
    g.host(SERVER, "server");
    g.host(KNOCKER, "knocker");
    g.host(SLOW, "slow-knocker");
    g.host(SCANNER, "scanner");

    for (i, port) in [5000u16, 4000, 7000].into_iter().enumerate() {
        let sport = g.ephemeral();
        g.syn(10.0 + i as f64, KNOCKER, SERVER, sport, port, None);
    }
    for t in [SSH_AT, 20.0] {
        let sport = g.ephemeral();
        g.handshake(t, KNOCKER, SERVER, sport, 22, 0.001);
    }

    let sport = g.ephemeral();
    g.syn(SLOW_KNOCK_AT, SLOW, SERVER, sport, 5000, None);
    let sport = g.ephemeral();
    g.syn(SLOW_RETURN_AT, SLOW, SERVER, sport, 4000, None);
    let sport = g.ephemeral();
    g.syn(SLOW_RETURN_AT + 1.0, SLOW, SERVER, sport, 22, None);

    let start = spec.knob("scan_start");
    let rate = spec.knob("scan_rate");
    let count = (rate * spec.knob("scan_secs")).round() as usize;
    let mut ports: Vec<u16> = (1024..=65535).filter(|p| ![4000, 5000, 7000].contains(p)).collect();
    ports.shuffle(&mut g.rng);
    g.mark_attack(start);
    for (i, &port) in ports.iter().take(count).enumerate() {
        let sport = g.ephemeral();
        g.syn(start + i as f64 / rate, SCANNER, SERVER, sport, port, Some("scan"));
    }
    // one probe while blocked, one after the block has lapsed
    let end = start + count as f64 / rate;
    for t in [end + 60.0, start + 190.0] {
        let sport = g.ephemeral();
        g.syn(t, SCANNER, SERVER, sport, 22, Some("probe"));
    }
}

pub mod conficker {
    use std::net::Ipv4Addr;

    pub const RESOLVER: Ipv4Addr = Ipv4Addr::new(10, 3, 0, 53);
    pub const FILESERVER: Ipv4Addr = Ipv4Addr::new(10, 3, 0, 5);
    pub const INFECTED: Ipv4Addr = Ipv4Addr::new(10, 3, 0, 66);
    /// Runs a reverse-DNS sweep (many NXDomain) at t=80, then talks SMB to
    /// the file server normally.
    pub const CLEAN: Ipv4Addr = Ipv4Addr::new(10, 3, 0, 20);
    pub const C2_START: f64 = 60.0;
    pub const SCAN_START: f64 = 62.0;
    pub const SCAN_SECS: f64 = 20.0;
    pub const RDNS_AT: f64 = 80.0;

    pub fn idle(i: usize) -> Ipv4Addr {
        Ipv4Addr::new(10, 3, 0, 30 + i as u8)
    }
}

const DOMAINS: [&str; 6] = ["mail.corp.example", "intranet.example", "www.example.com", "cdn.example.net", "news.example.org", "api.example.com"];

fn normal_lookups(g: &mut Gen, host: std::net::Ipv4Addr, resolver: std::net::Ipv4Addr, from: f64, to: f64, rate: f64) {
    let mut t = from + g.gap(rate);
    while t < to {
        let name = DOMAINS[g.rng_index(DOMAINS.len())];
        g.lookup(t, host, resolver, name, 1, 0, 0.003, None);
        t += g.gap(rate);
    }
}

fn random_label(g: &mut Gen) -> String {
    let len = g.rng.gen_range(8..=12);
    let tld = [".com", ".net", ".org", ".info", ".biz"][g.rng_index(5)];
    let mut s: String = (0..len).map(|_| g.rng.gen_range(b'a'..=b'z') as char).collect();
    s.push_str(tld);
    s
}

pub(super) fn conficker(g: &mut Gen, spec: &ScenarioSpec) {
    use conficker::*;
    g.host(RESOLVER, "resolver");
    g.host(FILESERVER, "fileserver");
    g.host(INFECTED, "infected");
    g.host(CLEAN, "clean");

    // ordinary name resolution for everyone
    normal_lookups(g, INFECTED, RESOLVER, 0.0, C2_START, 0.25);
    normal_lookups(g, CLEAN, RESOLVER, 0.0, spec.duration, 0.2);
    let idle_hosts = spec.knob("idle_hosts") as usize;
    for i in 0..idle_hosts {
        let h = idle(i);
        g.host(h, "clean");
        normal_lookups(g, h, RESOLVER, 0.0, spec.duration, 0.05);
        let mut t = 15.0 + 7.0 * i as f64;
        while t < spec.duration {
            let sport = g.ephemeral();
            g.handshake(t, h, FILESERVER, sport, 445, 0.002);
            t += 60.0;
        }
    }

    // rendezvous: lookups of generated domains, most of them NXDomain
    let queries = spec.knob("c2_queries") as usize;
    let nx = spec.knob("c2_nx_fraction");
    g.mark_attack(C2_START);
    for i in 0..queries {
        let t = C2_START + 15.0 * i as f64 / queries.max(1) as f64;
        let name = random_label(g);
        let rcode = if g.rng.gen_bool(nx.clamp(0.0, 1.0)) { 3 } else { 0 };
        g.lookup(t, INFECTED, RESOLVER, &name, 1, rcode, 0.003, Some("c2"));
    }

    // propagation: SYNs to port 445 of random addresses, few answered
    let syns = spec.knob("scan_syns") as usize;
    let answered = spec.knob("scan_answer_fraction").clamp(0.0, 1.0);
    for i in 0..syns {
        let t = SCAN_START + SCAN_SECS * i as f64 / syns.max(1) as f64;
        let target = Ipv4Addr::new(198, 51, 100, g.rng.gen_range(1..=254));
        let sport = g.ephemeral();
        g.syn(t, INFECTED, target, sport, 445, Some("scan"));
        if g.rng.gen_bool(answered) {
            g.tcp(t + 0.03, target, INFECTED, (445, sport), TcpFlags::SYN_ACK, &[]);
        }
    }

    // clean host: reverse lookups of local addresses, two in five unknown
    for i in 0..20u8 {
        let t = RDNS_AT + 0.25 * i as f64;
        let name = format!("{}.0.3.10.in-addr.arpa", 100 + i);
        let rcode = if i % 5 < 2 { 3 } else { 0 };
        g.lookup(t, CLEAN, RESOLVER, &name, 12, rcode, 0.003, None);
    }
    for i in 0..10 {
        let sport = g.ephemeral();
        g.handshake(RDNS_AT + 6.0 + 1.5 * i as f64, CLEAN, FILESERVER, sport, 445, 0.002);
    }
}

pub mod ddos {
    use std::net::Ipv4Addr;

    pub const TARGET: Ipv4Addr = Ipv4Addr::new(10, 4, 0, 80);
    /// Active from the start, before the flood.
    pub const EARLY_CLIENT: Ipv4Addr = Ipv4Addr::new(10, 4, 1, 10);
    /// First seen mid-attack.
    pub const LATE_CLIENT: Ipv4Addr = Ipv4Addr::new(10, 4, 1, 30);
    pub const BASELINE_HOSTS: u8 = 10;

    pub fn baseline(i: u8) -> Ipv4Addr {
        Ipv4Addr::new(10, 4, 2, 10 + i)
    }
}

pub(super) fn ddos(g: &mut Gen, spec: &ScenarioSpec) {
    use ddos::*;
    g.host(TARGET, "target");
    g.host(EARLY_CLIENT, "early-client");
    g.host(LATE_CLIENT, "late-client");
    for i in 0..BASELINE_HOSTS {
        g.host(baseline(i), "client");
    }

    let connect = |g: &mut Gen, t: f64, client: Ipv4Addr| {
        let sport = g.ephemeral();
        g.syn(t, client, TARGET, sport, 80, None);
        g.tcp(t + 0.001, TARGET, client, (80, sport), TcpFlags::SYN_ACK, &[]);
    };

    let rate = spec.knob("baseline_rate");
    if rate > 0.0 {
        let mut t = g.gap(rate);
        while t <= spec.duration {
            let c = baseline(g.rng_index(BASELINE_HOSTS as usize) as u8);
            connect(g, t, c);
            t += g.gap(rate);
        }
    }
    let client_rate = spec.knob("client_rate");
    if client_rate > 0.0 {
        for (client, from) in [(EARLY_CLIENT, 0.0), (LATE_CLIENT, spec.knob("late_client_start"))] {
            let mut t = from + g.gap(client_rate);
            while t <= spec.duration {
                connect(g, t, client);
                t += g.gap(client_rate);
            }
        }
    }

    // spoofed flood: linear ramp from the start rate to the peak, then flat
    let (start, end) = (spec.knob("attack_start"), spec.knob("attack_end"));
    let (r0, r1, ramp) = (spec.knob("attack_rate_start"), spec.knob("attack_rate_peak"), spec.knob("ramp_secs"));
    let rate_at = |t: f64| if ramp > 0.0 { r0 + (r1 - r0) * ((t - start) / ramp).min(1.0) } else { r1 };
    if r0 > 0.0 || r1 > 0.0 {
        let mut t = start;
        g.mark_attack(start);
        while t < end {
            let src = Ipv4Addr::new(198, 18 + g.rng.gen_range(0..2), g.rng.gen(), g.rng.gen_range(1..=254));
            let sport = g.ephemeral();
            g.syn(t, src, TARGET, sport, 80, Some("spoofed"));
            t += g.gap(rate_at(t).max(1e-3));
        }
    }
}

pub mod p2p {
    use std::net::Ipv4Addr;

    pub const HOST: Ipv4Addr = Ipv4Addr::new(10, 5, 0, 10);
    pub const WEB_CLIENT: Ipv4Addr = Ipv4Addr::new(10, 5, 0, 20);
    pub const RESOLVER: Ipv4Addr = Ipv4Addr::new(10, 5, 0, 53);
    pub const HOST_PORT: u16 = 6881;

    pub fn peer(i: usize) -> Ipv4Addr {
        Ipv4Addr::new(10, 5, 1, 10 + i as u8)
    }

    pub fn peer_port(i: usize) -> u16 {
        20000 + 7 * i as u16
    }
}

/// The P2P host exchanges UDP with every peer and opens TCP connections to
/// them; peers answer from their listening port. `multi_port_peers` of them
/// also connect back from a second, ephemeral port, so for the host
/// `distinct ports - distinct hosts` equals that knob.
pub(super) fn p2p(g: &mut Gen, spec: &ScenarioSpec) {
    use p2p::*;
    g.host(HOST, "p2p");
    g.host(WEB_CLIENT, "web");
    g.host(RESOLVER, "resolver");
    let peers = (spec.knob("peers") as usize).min(200);
    let multi = spec.knob("multi_port_peers") as usize;

    for i in 0..peers {
        let (p, pport) = (peer(i), peer_port(i));
        g.host(p, "peer");
        let mut t = 1.0 + 2.0 * i as f64 + g.rng.gen_range(0.0..1.0);
        while t < spec.duration - 5.0 {
            g.udp(t, HOST, p, (HOST_PORT, pport), b"d1:ad2:id20:abcdefghij0123456789e1:q4:ping1:t2:aa1:y1:qe", None);
            g.udp(t + 0.02, p, HOST, (pport, HOST_PORT), b"d1:rd2:id20:mnopqrstuvwxyz123456e1:t2:aa1:y1:re", None);
            let sport = g.ephemeral();
            let t0 = t + 0.5;
            g.handshake(t0, HOST, p, sport, pport, 0.02);
            g.tcp(t0 + 0.06, HOST, p, (sport, pport), PSH_ACK, &[0x13; 68]);
            g.tcp(t0 + 0.08, p, HOST, (pport, sport), PSH_ACK, &[0x13; 68]);
            t += 30.0 + g.rng.gen_range(-3.0..3.0);
        }
        if i < multi {
            let sport = g.ephemeral();
            g.handshake(20.0 + i as f64, p, HOST, sport, HOST_PORT, 0.02);
        }
    }

    let mut t = 2.0;
    while t < spec.duration {
        let server = Ipv4Addr::new(203, 0, 113, 20 + g.rng_index(4) as u8);
        g.lookup(t, WEB_CLIENT, RESOLVER, "www.example.com", 1, 0, 0.003, None);
        let sport = g.ephemeral();
        g.handshake(t + 0.01, WEB_CLIENT, server, sport, 443, 0.02);
        g.tcp(t + 0.06, WEB_CLIENT, server, (sport, 443), PSH_ACK, &[0x17; 80]);
        t += 5.0 + g.rng.gen_range(0.0..2.0);
    }
}

pub mod entropy {
    use std::net::Ipv4Addr;

    pub const SERVER: Ipv4Addr = Ipv4Addr::new(10, 6, 1, 1);
    pub const MIN_LEN: usize = 101;
    pub const MAX_LEN: usize = 1400;

    pub fn client(j: usize) -> Ipv4Addr {
        Ipv4Addr::new(10, 6, 0, 10 + (j % 50) as u8)
    }
}

const WORDS: [&str; 24] = [
    "the", "of", "request", "content", "server", "host", "accept", "language", "session", "value", "index", "page",
    "user", "agent", "cache", "control", "and", "with", "data", "text", "html", "type", "length", "encoding",
];

fn text_payload(g: &mut Gen, len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(len + 16);
    while out.len() < len {
        let w = WORDS[g.rng_index(WORDS.len())];
        out.extend_from_slice(w.as_bytes());
        out.push(match g.rng_index(10) {
            0 => b',',
            1 => b'.',
            2 => b':',
            _ => b' ',
        });
    }
    out.truncate(len);
    out
}

/// Interleaves random-byte and ASCII-text payloads, alternating TCP and
/// UDP, one millisecond apart. Every packet is labeled.
pub(super) fn entropy(g: &mut Gen, spec: &ScenarioSpec) {
    use entropy::*;
    g.host(SERVER, "server");
    let n_random = spec.knob("random_packets") as usize;
    let n_text = spec.knob("text_packets") as usize;
    let mut kinds: Vec<bool> = std::iter::repeat(true).take(n_random).chain(std::iter::repeat(false).take(n_text)).collect();
    kinds.shuffle(&mut g.rng);
    for (j, random) in kinds.into_iter().enumerate() {
        let t = 0.001 * (j + 1) as f64;
        let len = g.rng.gen_range(MIN_LEN..=MAX_LEN);
        let payload = if random {
            let mut p = vec![0u8; len];
            g.rng.fill(&mut p[..]);
            p
        } else {
            text_payload(g, len)
        };
        let label = if random { "encrypted" } else { "text" };
        let sport = g.ephemeral();
        let spec_ = g.spec(client(j), SERVER);
        let frame = if j % 2 == 0 {
            let seq = g.rng.gen();
            crate::packet::tcp_frame(&spec_, sport, 8443, PSH_ACK, seq, &payload)
        } else {
            crate::packet::udp_frame(&spec_, sport, 4433, &payload)
        };
        g.push(t, frame, Some(label));
    }
}
