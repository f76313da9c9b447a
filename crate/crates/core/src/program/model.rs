use std::fmt;

use super::expr::Expr;
use crate::packet::FieldId;
use crate::sketch::{DetectorPolicy, HashConfig, MonitorKind, MultiHashMetric, SketchError, VariationDetector, VariationMonitor};

/// Payload statistics addressable from expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stat {
    Popcount,
    Bits,
    Printable,
    Entropy,
    /// Mean bit entropy of a uniformly random payload of this length.
    UniformMean,
    /// Its standard deviation.
    UniformSigma,
}

impl Stat {
    pub const ALL: [Stat; 6] = [Stat::Popcount, Stat::Bits, Stat::Printable, Stat::Entropy, Stat::UniformMean, Stat::UniformSigma];

    pub fn name(self) -> &'static str {
        match self {
            Stat::Popcount => "pay.popcount",
            Stat::Bits => "pay.bits",
            Stat::Printable => "pay.printable",
            Stat::Entropy => "pay.entropy",
            Stat::UniformMean => "pay.hu",
            Stat::UniformSigma => "pay.sigma",
        }
    }

    pub fn from_name(s: &str) -> Option<Stat> {
        Stat::ALL.iter().copied().find(|st| st.name() == s)
    }
}

/// A resolved expression operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Metric(usize),
    Feature(usize),
    Field(FieldId),
    Stat(Stat),
    /// Secondary table read at the event's primary key.
    Table(usize),
    /// Value saved in the firing timeout's context.
    Ctx(usize),
    /// Virtual clock in seconds.
    Now,
}

pub type CExpr = Expr<Slot>;

/// Key bytes used by MOPs and key-taking actions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KeySpec {
    /// The event's primary key.
    Primary,
    Fields(Vec<FieldId>),
}

impl fmt::Display for KeySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KeySpec::Primary => f.write_str("key"),
            KeySpec::Fields(fs) => {
                let names: Vec<&str> = fs.iter().map(|f| f.name()).collect();
                f.write_str(&names.join("|"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    Packet {
        filter: CExpr,
        key: Vec<FieldId>,
        /// Fields composing the lookup key into the related table.
        related: Option<Vec<FieldId>>,
    },
    Timeout {
        timeout: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventDescriptor {
    pub id: String,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorSpec {
    pub k: u32,
    pub cells: usize,
    pub window: Option<f64>,
    pub swap_threshold: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorSpec {
    pub kind: MonitorKind,
    pub k: u32,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSpec {
    pub id: String,
    pub seed: u64,
    pub vd: Option<DetectorSpec>,
    pub vm: Option<MonitorSpec>,
    pub chain: Option<usize>,
}

impl MetricSpec {
    /// Instantiates the sketch. Stage seeds differ so detector and monitor
    /// hash independently.
    pub fn build(&self, chain_parent: Option<String>) -> Result<MultiHashMetric, SketchError> {
        let vd = match &self.vd {
            Some(d) => Some(VariationDetector::new(
                HashConfig::new(d.k, d.cells, self.seed)?,
                DetectorPolicy { window: d.window, swap_threshold: d.swap_threshold },
            )?),
            None => None,
        };
        let vm = match &self.vm {
            Some(m) => Some(VariationMonitor::new(m.kind, HashConfig::new(m.k, m.cells, self.seed ^ 0x5bd1_e995_0000_0001)?)?),
            None => None,
        };
        MultiHashMetric::new(self.id.clone(), vd, vm, chain_parent)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpec {
    pub id: String,
    pub expr: CExpr,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mop {
    Set { metric: usize, dfk: KeySpec, mfk: KeySpec, qty: CExpr },
    Get { metric: usize, key: KeySpec },
}

impl Mop {
    pub fn metric(&self) -> usize {
        match self {
            Mop::Set { metric, .. } | Mop::Get { metric, .. } => *metric,
        }
    }
}

/// Secondary tables plus the reserved related table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableRef {
    Related,
    Secondary(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TableWrite {
    Value(CExpr),
    /// Stores the current primary key (related table only).
    PrimaryKey,
    Delete,
}

/// A named value carried into an alert or a timeout context.
#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub name: String,
    pub expr: CExpr,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    SetTimeout { timeout: usize, delay: CExpr },
    UpdateTimeout { timeout: usize, delay: CExpr },
    SaveTimeoutCtx { timeout: usize, items: Vec<(usize, CExpr)> },
    Drop,
    Allow,
    Mark(String),
    NextStatus { key: KeySpec, state: usize },
    UpdateTable { table: TableRef, key: KeySpec, write: TableWrite },
    Print { message: String, items: Vec<Item> },
    /// `None` exports every feature computed for the event.
    Export { items: Option<Vec<Item>> },
}

impl Action {
    pub const NAMES: [&'static str; 10] = [
        "SET_TIMEOUT",
        "UPDATE_TIMEOUT",
        "SAVE_TIMEOUT_CTX",
        "DROP",
        "ALLOW",
        "MARK",
        "NEXT_STATUS",
        "UPDATE_TABLE",
        "PRINT",
        "EXPORT",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Action::SetTimeout { .. } => "SET_TIMEOUT",
            Action::UpdateTimeout { .. } => "UPDATE_TIMEOUT",
            Action::SaveTimeoutCtx { .. } => "SAVE_TIMEOUT_CTX",
            Action::Drop => "DROP",
            Action::Allow => "ALLOW",
            Action::Mark(_) => "MARK",
            Action::NextStatus { .. } => "NEXT_STATUS",
            Action::UpdateTable { .. } => "UPDATE_TABLE",
            Action::Print { .. } => "PRINT",
            Action::Export { .. } => "EXPORT",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub when: CExpr,
    pub actions: Vec<Action>,
    /// `None` keeps the current state.
    pub next: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Handler {
    pub mops: Vec<Mop>,
    pub decisions: Vec<Decision>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub name: String,
    /// Indexed by event; `None` means the event is ignored in this state.
    pub handlers: Vec<Option<Handler>>,
}
