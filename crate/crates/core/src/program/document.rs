//! Serde mirror of the program document. Everything here is unresolved
//! text; `compile` turns it into a [`Program`](super::Program).

use std::collections::BTreeMap;

use serde::Deserialize;

/// A number written literally or as the name of a parameter.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Num {
    Lit(f64),
    Param(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDocument {
    pub program: RawHeader,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub metrics: Vec<RawMetric>,
    #[serde(default)]
    pub features: Vec<RawFeature>,
    #[serde(default)]
    pub events: Vec<RawEvent>,
    #[serde(default)]
    pub states: Vec<RawState>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawHeader {
    pub name: String,
    pub default_state: String,
    #[serde(default)]
    pub timeouts: Vec<String>,
    #[serde(default)]
    pub tables: Vec<String>,
    pub status_capacity: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMetric {
    pub id: String,
    pub seed: Option<u64>,
    pub chain: Option<String>,
    pub vd: Option<RawDetector>,
    pub vm: Option<RawMonitor>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDetector {
    pub k: Option<Num>,
    pub cells: Option<Num>,
    pub window: Option<Num>,
    pub swap_threshold: Option<Num>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMonitor {
    pub kind: String,
    pub tau: Option<Num>,
    pub k: Option<Num>,
    pub cells: Option<Num>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFeature {
    pub id: String,
    pub expr: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawEvent {
    pub id: String,
    #[serde(rename = "type")]
    pub kind: String,
    pub filter: Option<String>,
    pub key: Option<String>,
    pub related: Option<String>,
    pub timeout: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawState {
    pub name: String,
    #[serde(default)]
    pub on: Vec<RawHandler>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawHandler {
    pub event: String,
    #[serde(default)]
    pub mops: Vec<String>,
    #[serde(default)]
    pub decide: Vec<RawDecision>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDecision {
    pub when: Option<String>,
    #[serde(default)]
    pub actions: Vec<String>,
    pub next: Option<String>,
}
