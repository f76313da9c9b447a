//! Bundled programs driven packet by packet, plus audits over their
//! scenario traces.

use std::net::Ipv4Addr;

use xfsmon::library::{builtin, list_builtins};
use xfsmon::packet::{tcp_frame, FrameSpec, TcpFlags};
use xfsmon::replay::replay_all;
use xfsmon::scenario::{generate, ScenarioSpec};
use xfsmon::{Disposition, Engine, Timestamp, Verdict};

const CLIENT: Ipv4Addr = Ipv4Addr::new(10, 0, 0, 7);
const SERVER: Ipv4Addr = Ipv4Addr::new(10, 0, 0, 1);

fn portknock() -> Engine {
    Engine::new(builtin("portknock").unwrap().compile()).unwrap()
}

fn syn(e: &mut Engine, secs: f64, dport: u16) -> Verdict {
    let frame = tcp_frame(&FrameSpec::new(CLIENT, SERVER), 40000, dport, TcpFlags::SYN, 0, &[]);
    e.process_packet(&frame, Timestamp::from_secs_f64(1000.0 + secs))
}

fn state(e: &Engine) -> &str {
    e.resolve_status(&CLIENT.octets())
}

#[test]
fn knock_sequence_opens_ssh() {
    let mut e = portknock();
    assert_eq!(syn(&mut e, 0.0, 22).disposition, Disposition::Drop);
    for (t, port) in [(1.0, 5000), (2.0, 4000), (3.0, 7000)] {
        assert_eq!(syn(&mut e, t, port).disposition, Disposition::Drop);
    }
    assert_eq!(state(&e), "allowed");
    let v = syn(&mut e, 4.0, 22);
    assert_eq!(v.disposition, Disposition::Allow);
    assert_eq!(state(&e), "allowed");
}

#[test]
fn knock_pause_rolls_back() {
    let mut e = portknock();
    syn(&mut e, 0.0, 5000);
    assert_eq!(state(&e), "5000contacted");
    let v = syn(&mut e, 6.0, 4000);
    assert_eq!(v.state_before.as_deref(), Some("default"));
    assert_eq!(state(&e), "default");
    let fired = e.take_fired();
    assert_eq!(fired.len(), 1);
    assert_eq!(fired[0].clock, Timestamp::from_secs_f64(1005.0));
}

#[test]
fn burst_of_41_scan_syns_is_blocked() {
    let mut e = portknock();
    let mut last = None;
    for i in 0..41u16 {
        last = Some(syn(&mut e, f64::from(i) * 0.001, 10_000 + i));
        if i < 40 {
            assert_ne!(state(&e), "attack", "blocked after {} SYNs", i + 1);
        }
    }
    let v = last.unwrap();
    assert_eq!(v.state_after.as_deref(), Some("attack"));
    assert_eq!(v.disposition, Disposition::Drop);
    assert_eq!(v.alerts.len(), 1);
}

/// The scan rate is a decayed count with a 5 s memory, so 41 SYNs spread
/// evenly over a whole second sum to about 37 and stay below the limit.
#[test]
fn evenly_spread_41_syns_stay_below_limit() {
    let mut e = portknock();
    for i in 0..41u16 {
        syn(&mut e, f64::from(i) / 40.0, 10_000 + i);
    }
    assert_eq!(state(&e), "default");
}

#[test]
fn repeated_port_counts_once() {
    let mut e = portknock();
    for i in 0..100 {
        syn(&mut e, f64::from(i) * 0.001, 9999);
    }
    assert_eq!(state(&e), "default");
}

#[test]
fn observed_transitions_are_declared_and_default_is_never_stored() {
    for name in list_builtins() {
        let b = builtin(name).unwrap();
        let program = b.compile();
        let declared = program.transitions();
        let kind = b.fixture().scenario.parse().unwrap();
        let trace = generate(&ScenarioSpec::new(kind, 3));
        let (r, out) = replay_all(program.clone(), &trace.records);
        let mut last = Timestamp::ZERO;
        for v in &out.verdicts {
            assert!(v.clock >= last, "{name}: clock went backwards");
            last = v.clock;
            if v.transitioned() {
                let t = (v.state_before.clone().unwrap(), v.event.clone().unwrap(), v.state_after.clone().unwrap());
                assert!(declared.contains(&t), "{name}: undeclared transition {t:?}");
            }
        }
        let default = program.default_state;
        for e in r.shards() {
            assert!(e.status_entries().all(|(_, s)| s.state != default), "{name}: default state stored");
        }
    }
}
