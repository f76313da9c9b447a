//! Bundled programs for the reference use cases, plus their golden fixtures.
//!
//! Each program ships as a TOML document under `assets/programs`. Every
//! threshold and window is a declared parameter, so callers can override
//! it through [`BuiltinProgram::compile_with`] without editing the text.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::program::{Program, ProgramError};
use crate::replay::replay_all;
use crate::scenario::{generate, ScenarioSpec};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown program `{0}` (available: conficker, ddos, entropy, p2p, portknock)")]
pub struct UnknownProgram(pub String);

/// Sorted; [`list_builtins`] returns this order.
const PROGRAMS: [(&str, &str, &str); 5] = [
    (
        "conficker",
        include_str!("../assets/programs/conficker.toml"),
        include_str!("../assets/fixtures/conficker.toml"),
    ),
    ("ddos", include_str!("../assets/programs/ddos.toml"), include_str!("../assets/fixtures/ddos.toml")),
    ("entropy", include_str!("../assets/programs/entropy.toml"), include_str!("../assets/fixtures/entropy.toml")),
    ("p2p", include_str!("../assets/programs/p2p.toml"), include_str!("../assets/fixtures/p2p.toml")),
    (
        "portknock",
        include_str!("../assets/programs/portknock.toml"),
        include_str!("../assets/fixtures/portknock.toml"),
    ),
];

/// Golden expectations for one bundled program.
///
/// `transitions` is the hand-transcribed state graph as `[from, event, to]`
/// triples. `alert_digest` (SHA-256 of the alert lines) and `trajectory`
/// (every state change, in order) are recorded from replaying the scenario
/// trace `scenario` generated with `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fixture {
    pub scenario: String,
    pub seed: u64,
    pub alert_digest: String,
    pub transitions: Vec<[String; 3]>,
    #[serde(default)]
    pub trajectory: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub clock: String,
    pub key: String,
    pub event: String,
    pub from: String,
    pub to: String,
}

/// What replaying a fixture scenario produced.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureRun {
    pub alert_text: String,
    pub alert_digest: String,
    pub trajectory: Vec<Step>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone)]
pub struct BuiltinProgram {
    pub name: &'static str,
    pub document: &'static str,
    /// Declared parameters and their defaults.
    pub params: BTreeMap<String, f64>,
    fixture: &'static str,
}

impl BuiltinProgram {
    pub fn compile(&self) -> Program {
        Program::parse(self.document).expect("bundled programs are validated by the test suite")
    }

    pub fn compile_with(&self, overrides: &BTreeMap<String, f64>) -> Result<Program, ProgramError> {
        Program::parse_with_params(self.document, overrides)
    }

    pub fn fixture(&self) -> Fixture {
        toml::from_str(self.fixture).expect("bundled fixtures are validated by the test suite")
    }

    /// Generates the fixture's scenario trace and replays it.
    pub fn run_fixture(&self) -> FixtureRun {
        let f = self.fixture();
        let kind = f.scenario.parse().expect("fixture names a scenario");
        let trace = generate(&ScenarioSpec::new(kind, f.seed));
        let (_, out) = replay_all(self.compile(), &trace.records);
        let trajectory = out
            .verdicts
            .iter()
            .filter(|v| v.transitioned())
            .map(|v| Step {
                clock: v.clock.to_string(),
                key: v.key.as_deref().map(render_addr).unwrap_or_default(),
                event: v.event.clone().unwrap_or_default(),
                from: v.state_before.clone().unwrap_or_default(),
                to: v.state_after.clone().unwrap_or_default(),
            })
            .collect();
        FixtureRun { alert_digest: sha256_hex(out.alert_text.as_bytes()), alert_text: out.alert_text, trajectory }
    }
}

/// Dotted quad for 4-byte keys, hex otherwise.
fn render_addr(k: &[u8]) -> String {
    match k {
        [a, b, c, d] => format!("{a}.{b}.{c}.{d}"),
        _ => k.iter().map(|b| format!("{b:02x}")).collect(),
    }
}

pub fn list_builtins() -> Vec<&'static str> {
    PROGRAMS.iter().map(|p| p.0).collect()
}

pub fn builtin(name: &str) -> Result<BuiltinProgram, UnknownProgram> {
    let &(name, document, fixture) =
        PROGRAMS.iter().find(|p| p.0 == name).ok_or_else(|| UnknownProgram(name.to_string()))?;
    let params = Program::parse(document).map(|p| p.params).unwrap_or_default();
    Ok(BuiltinProgram { name, document, params, fixture })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::program::{EventKind, Expr, Op, Slot};

    #[test]
    fn five_names_in_stable_order() {
        assert_eq!(list_builtins(), ["conficker", "ddos", "entropy", "p2p", "portknock"]);
        for name in list_builtins() {
            assert_eq!(builtin(name).unwrap().name, name);
        }
    }

    #[test]
    fn unknown_name() {
        assert_eq!(builtin("nope").unwrap_err(), UnknownProgram("nope".into()));
    }

    #[test]
    fn all_compile_without_warnings() {
        for name in list_builtins() {
            let b = builtin(name).unwrap();
            let p = Program::parse(b.document).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(p.name, name);
            assert!(p.warnings().is_empty(), "{name}: {:?}", p.warnings());
            assert_eq!(p.params, b.params);
        }
    }

    #[test]
    fn declared_graph_matches_fixture() {
        for name in list_builtins() {
            let b = builtin(name).unwrap();
            let p = b.compile();
            let want: BTreeSet<(String, String, String)> =
                b.fixture().transitions.into_iter().map(|[a, e, z]| (a, e, z)).collect();
            assert_eq!(p.transitions(), want, "{name}");
        }
    }

    #[test]
    fn fixtures_name_their_scenario() {
        for name in list_builtins() {
            let f = builtin(name).unwrap().fixture();
            assert_eq!(f.scenario, name);
            assert_eq!(f.alert_digest.len(), 64);
        }
    }

    fn param(name: &str, key: &str) -> f64 {
        builtin(name).unwrap().params[key]
    }

    #[test]
    fn published_constants_are_parameters() {
        assert_eq!(param("conficker", "nx_ratio"), 0.25);
        assert_eq!(param("ddos", "window"), 60.0);
        assert_eq!(param("ddos", "tau"), 240.0);
        assert_eq!(param("ddos", "threshold"), 100.0);
        assert_eq!(param("ddos", "growth"), 1.2);
        assert_eq!(param("ddos", "consecutive"), 2.0);
        assert_eq!(param("p2p", "max_gap"), 10.0);
        assert_eq!(param("portknock", "scan_limit"), 40.0);
        assert_eq!(param("portknock", "knock_timeout"), 5.0);
        assert_eq!(param("portknock", "block_time"), 120.0);
        assert_eq!(param("entropy", "printable_max"), 0.75);
        assert_eq!(param("entropy", "sigmas"), 3.0);
        assert_eq!(param("entropy", "min_len"), 100.0);
        assert_eq!(
            [param("portknock", "knock1"), param("portknock", "knock2"), param("portknock", "knock3")],
            [5000.0, 4000.0, 7000.0]
        );
    }

    #[test]
    fn conficker_features_are_ratios() {
        let p = builtin("conficker").unwrap().compile();
        let m = |id: &str| Expr::Ref(Slot::Metric(p.metric_index(id).unwrap()));
        let f1 = &p.features[p.feature_index("F1").unwrap()].expr;
        let f2 = &p.features[p.feature_index("F2").unwrap()].expr;
        assert_eq!(*f1, Expr::Apply(Op::Div, vec![m("M2"), m("M1")]));
        assert_eq!(*f2, Expr::Apply(Op::Div, vec![m("M4"), m("M3")]));
    }

    #[test]
    fn portknock_shape() {
        let p = builtin("portknock").unwrap().compile();
        assert_eq!(p.packet_events(), 4);
        let timeouts = p.events.iter().filter(|e| matches!(e.kind, EventKind::Timeout { .. })).count();
        assert_eq!(timeouts, 2);
        let states: Vec<&str> = p.states.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(states, ["default", "5000contacted", "4000contacted", "allowed", "attack"]);
    }

    #[test]
    fn overrides_apply() {
        let b = builtin("ddos").unwrap();
        let p = b.compile_with(&BTreeMap::from([("threshold".to_string(), 50.0)])).unwrap();
        assert_eq!(p.params["threshold"], 50.0);
        assert!(b.compile_with(&BTreeMap::from([("bogus".to_string(), 1.0)])).is_err());
    }
}
