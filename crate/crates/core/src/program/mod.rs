//! Monitoring programs: the TOML document, its expression language, and the
//! compiled form the engine executes.

mod compile;
pub mod document;
pub mod expr;
mod model;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

pub use compile::{DEFAULT_CELLS, DEFAULT_HASHES, DEFAULT_STATUS_CAPACITY};
pub use expr::{parse_expr, EvalError, Expr, Name, Op, SyntaxError};
pub use model::*;

/// Reserved table mapping secondary keys to primary keys.
pub const RELATED_TABLE: &str = "related";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProgramError {
    #[error("syntax error at {location}: {message}")]
    Syntax { location: String, message: String },
    #[error("invalid program:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
}

/// Non-fatal lint.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Warning {
    UnreachableState(String),
    UnusedMetric(String),
    UnhandledEvent(String),
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::UnreachableState(s) => write!(f, "state `{s}` is unreachable from the default state"),
            Warning::UnusedMetric(m) => write!(f, "metric `{m}` is never read"),
            Warning::UnhandledEvent(e) => write!(f, "event `{e}` is not handled in any state"),
        }
    }
}

/// A validated program. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub default_state: usize,
    pub states: Vec<State>,
    pub events: Vec<EventDescriptor>,
    pub metrics: Vec<MetricSpec>,
    pub features: Vec<FeatureSpec>,
    /// Feature indices with dependencies first.
    pub feature_order: Vec<usize>,
    pub tables: Vec<String>,
    pub timeouts: Vec<String>,
    pub ctx_names: Vec<String>,
    pub status_capacity: usize,
}

impl Program {
    pub fn parse(text: &str) -> Result<Program, ProgramError> {
        Self::parse_with_params(text, &BTreeMap::new())
    }

    /// Parses with parameter values replaced before any expression is
    /// resolved. Overrides must name declared parameters.
    pub fn parse_with_params(text: &str, overrides: &BTreeMap<String, f64>) -> Result<Program, ProgramError> {
        let doc: document::RawDocument = toml::from_str(text).map_err(|e| {
            let location = match e.span() {
                Some(span) => {
                    let before = &text[..span.start.min(text.len())];
                    let line = before.matches('\n').count() + 1;
                    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
                    format!("line {line}, column {col}")
                }
                None => "document".to_string(),
            };
            ProgramError::Syntax { location, message: e.message().to_string() }
        })?;
        compile::compile(doc, overrides)
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s.name == name)
    }

    pub fn event_index(&self, id: &str) -> Option<usize> {
        self.events.iter().position(|e| e.id == id)
    }

    pub fn metric_index(&self, id: &str) -> Option<usize> {
        self.metrics.iter().position(|m| m.id == id)
    }

    pub fn feature_index(&self, id: &str) -> Option<usize> {
        self.features.iter().position(|f| f.id == id)
    }

    pub fn default_state_name(&self) -> &str {
        &self.states[self.default_state].name
    }

    pub fn packet_events(&self) -> usize {
        self.events.iter().filter(|e| matches!(e.kind, EventKind::Packet { .. })).count()
    }

    /// Resizes every sketch stage to `cells` cells, e.g. large enough to
    /// make hash collisions negligible.
    pub fn with_metric_cells(mut self, cells: usize) -> Program {
        for m in &mut self.metrics {
            if let Some(d) = m.vd.as_mut() {
                d.cells = cells;
            }
            if let Some(v) = m.vm.as_mut() {
                v.cells = cells;
            }
        }
        self
    }

    fn handlers(&self) -> impl Iterator<Item = (usize, usize, &Handler)> {
        self.states
            .iter()
            .enumerate()
            .flat_map(|(s, st)| st.handlers.iter().enumerate().filter_map(move |(e, h)| h.as_ref().map(|h| (s, e, h))))
    }

    fn all_exprs(&self) -> Vec<&CExpr> {
        let mut out: Vec<&CExpr> = self.features.iter().map(|f| &f.expr).collect();
        for (_, _, h) in self.handlers() {
            for d in &h.decisions {
                out.push(&d.when);
                for a in &d.actions {
                    match a {
                        Action::SetTimeout { delay, .. } | Action::UpdateTimeout { delay, .. } => out.push(delay),
                        Action::SaveTimeoutCtx { items, .. } => out.extend(items.iter().map(|(_, e)| e)),
                        Action::UpdateTable { write: TableWrite::Value(e), .. } => out.push(e),
                        Action::Print { items, .. } | Action::Export { items: Some(items) } => {
                            out.extend(items.iter().map(|i| &i.expr))
                        }
                        _ => {}
                    }
                }
            }
        }
        out
    }

    /// State-changing edges `(from, event, to)` declared by decision entries.
    pub fn transitions(&self) -> BTreeSet<(String, String, String)> {
        let mut out = BTreeSet::new();
        for (s, e, h) in self.handlers() {
            for d in &h.decisions {
                if let Some(n) = d.next.filter(|&n| n != s) {
                    out.insert((self.states[s].name.clone(), self.events[e].id.clone(), self.states[n].name.clone()));
                }
            }
        }
        out
    }

    pub fn warnings(&self) -> Vec<Warning> {
        let mut out = Vec::new();

        let mut reachable = vec![false; self.states.len()];
        reachable[self.default_state] = true;
        let mut queue = VecDeque::from([self.default_state]);
        // NEXT_STATUS can place any key into its target from a reachable state.
        while let Some(s) = queue.pop_front() {
            for h in self.states[s].handlers.iter().flatten() {
                for d in &h.decisions {
                    let targets = d.next.into_iter().chain(d.actions.iter().filter_map(|a| match a {
                        Action::NextStatus { state, .. } => Some(*state),
                        _ => None,
                    }));
                    for t in targets {
                        if !reachable[t] {
                            reachable[t] = true;
                            queue.push_back(t);
                        }
                    }
                }
            }
        }
        for (s, st) in self.states.iter().enumerate() {
            if !reachable[s] {
                out.push(Warning::UnreachableState(st.name.clone()));
            }
        }

        let mut read = vec![false; self.metrics.len()];
        for e in self.all_exprs() {
            for r in e.refs() {
                if let Slot::Metric(m) = r {
                    read[*m] = true;
                }
            }
        }
        for (_, _, h) in self.handlers() {
            for m in &h.mops {
                if let Mop::Get { metric, .. } = m {
                    read[*metric] = true;
                }
            }
        }
        for m in &self.metrics {
            if let Some(p) = m.chain {
                read[p] = true;
            }
        }
        for (m, r) in self.metrics.iter().zip(&read) {
            if !r {
                out.push(Warning::UnusedMetric(m.id.clone()));
            }
        }

        for (e, ev) in self.events.iter().enumerate() {
            if !self.states.iter().any(|s| s.handlers[e].is_some()) {
                out.push(Warning::UnhandledEvent(ev.id.clone()));
            }
        }
        out
    }
}
