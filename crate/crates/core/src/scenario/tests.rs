use proptest::prelude::*;

use super::*;
use crate::packet::dissect;

fn gen(kind: ScenarioKind, seed: u64) -> Trace {
    generate(&ScenarioSpec::new(kind, seed))
}

#[test]
fn names_round_trip() {
    for k in ScenarioKind::ALL {
        assert_eq!(k.name().parse::<ScenarioKind>().unwrap(), k);
    }
    assert!("nope".parse::<ScenarioKind>().is_err());
}

#[test]
fn same_seed_same_bytes() {
    for k in ScenarioKind::ALL {
        assert_eq!(gen(k, 7).pcap_bytes(), gen(k, 7).pcap_bytes(), "{k}");
    }
}

#[test]
fn different_seed_different_bytes() {
    for k in ScenarioKind::ALL {
        assert_ne!(gen(k, 1).pcap_bytes(), gen(k, 2).pcap_bytes(), "{k}");
    }
}

#[test]
fn time_ordered_inside_the_window_and_dissectable() {
    for k in ScenarioKind::ALL {
        let t = gen(k, 3);
        let end = EPOCH + secs_to_micros(t.truth.duration);
        assert!(t.records.windows(2).all(|w| w[0].ts <= w[1].ts), "{k}");
        for r in &t.records {
            assert!(r.ts >= EPOCH && r.ts <= end, "{k}");
            let pv = dissect(&r.data, r.ts).unwrap();
            assert!(pv.has(crate::packet::Layers::IPV4), "{k}");
        }
        assert_eq!(t.truth.packets, t.records.len());
    }
}

#[test]
fn labels_point_at_real_packets() {
    for k in ScenarioKind::ALL {
        let t = gen(k, 4);
        for l in &t.truth.labeled {
            assert_eq!(t.records[l.index].ts, l.ts, "{k}");
        }
        if let Some(a) = t.truth.attack_start {
            let first = t.truth.labeled.iter().map(|l| l.ts).min().unwrap();
            assert_eq!(a, first, "{k}: attack start is the first labeled packet");
        }
    }
}

#[test]
fn unknown_knob_rejected() {
    let s = ScenarioSpec::new(ScenarioKind::Ddos, 1);
    assert!(matches!(s.clone().with_knob("scan_rate", 1.0), Err(ScenarioError::UnknownKnob { .. })));
    assert!(s.clone().with_knob("attack_rate_peak", -1.0).is_err());
    assert_eq!(s.with_knob("attack_rate_peak", 50.0).unwrap().knobs["attack_rate_peak"], 50.0);
}

#[test]
fn duration_truncates() {
    let short = generate(&ScenarioSpec::new(ScenarioKind::Background, 9).with_duration(30.0).unwrap());
    let long = gen(ScenarioKind::Background, 9);
    assert!(short.records.len() < long.records.len());
    assert!(short.records.last().unwrap().ts <= EPOCH + 30_000_000);
}

#[test]
fn portknock_scan_is_distinct_ports() {
    let t = gen(ScenarioKind::Portknock, 1);
    let mut ports = std::collections::BTreeSet::new();
    for l in t.truth.labeled.iter().filter(|l| l.label == "scan") {
        let pv = dissect(&t.records[l.index].data, l.ts).unwrap();
        assert_eq!(pv.ip_src(), cases::portknock::SCANNER);
        assert!(ports.insert(pv.dport()));
    }
    assert_eq!(ports.len(), 200);
    assert_eq!(t.truth.hosts["10.2.0.66"], "scanner");
}

#[test]
fn entropy_corpus_shape() {
    let t = gen(ScenarioKind::Entropy, 1);
    assert_eq!(t.records.len(), 2000);
    let random = t.truth.labeled.iter().filter(|l| l.label == "encrypted").count();
    assert_eq!(random, 1000);
    for r in &t.records {
        let pv = dissect(&r.data, r.ts).unwrap();
        assert!(pv.payload().len() > 100);
    }
}

#[test]
fn write_emits_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let pcap = dir.path().join("pk.pcap");
    let t = gen(ScenarioKind::Portknock, 5);
    let side = t.write(&pcap).unwrap();
    assert_eq!(side, dir.path().join("pk.truth.json"));
    let back: GroundTruth = serde_json::from_str(&std::fs::read_to_string(side).unwrap()).unwrap();
    assert_eq!(back, t.truth);
    assert_eq!(std::fs::read(pcap).unwrap(), t.pcap_bytes());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn generator_is_a_function_of_spec(seed in any::<u64>(), dur in 5.0f64..60.0) {
        let spec = ScenarioSpec::new(ScenarioKind::Background, seed).with_duration(dur).unwrap();
        prop_assert_eq!(generate(&spec).pcap_bytes(), generate(&spec).pcap_bytes());
    }
}
