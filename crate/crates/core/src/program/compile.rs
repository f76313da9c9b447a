//! Resolution and validation of a raw document into a [`Program`].

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::document::{Num, RawDecision, RawDocument, RawEvent, RawMetric};
use super::expr::{parse_expr, split_call, Expr, Name, SyntaxError};
use super::model::*;
use super::{Program, ProgramError, RELATED_TABLE};
use crate::packet::FieldId;
use crate::sketch::MonitorKind;

pub const DEFAULT_HASHES: u32 = 4;
pub const DEFAULT_CELLS: usize = 1 << 16;
pub const DEFAULT_STATUS_CAPACITY: usize = 1 << 16;
const RESERVED: [&str; 5] = ["now", "key", "table", "ctx", "stay"];

/// Which operand kinds an expression position may reference.
#[derive(Clone, Copy)]
struct Scope {
    computed: bool,
}

const PACKET_ONLY: Scope = Scope { computed: false };
const ANYTHING: Scope = Scope { computed: true };

struct Compiler {
    params: BTreeMap<String, f64>,
    metrics: HashMap<String, usize>,
    features: HashMap<String, usize>,
    tables: Vec<String>,
    timeouts: Vec<String>,
    states: HashMap<String, usize>,
    ctx_names: Vec<String>,
    ctx_written: BTreeSet<usize>,
    ctx_read: BTreeMap<usize, String>,
    errors: Vec<String>,
    syntax: Option<ProgramError>,
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn unquote(s: &str) -> &str {
    s.strip_prefix('"').and_then(|r| r.strip_suffix('"')).unwrap_or(s)
}

impl Compiler {
    fn error(&mut self, msg: String) {
        self.errors.push(msg);
    }

    fn syntax_error(&mut self, at: &str, e: SyntaxError) {
        if self.syntax.is_none() {
            self.syntax = Some(ProgramError::Syntax { location: at.to_string(), message: e.to_string() });
        }
    }

    fn expr(&mut self, src: &str, at: &str, scope: Scope) -> Option<CExpr> {
        let parsed = match parse_expr(src) {
            Ok(e) => e,
            Err(e) => {
                self.syntax_error(at, e);
                return None;
            }
        };
        let mut problems = Vec::new();
        let resolved = parsed.try_map(&mut |n: &Name| -> Result<CExpr, ()> {
            match self.resolve(n, scope) {
                Ok(e) => Ok(e),
                Err(m) => {
                    problems.push(m);
                    Ok(Expr::Const(0.0))
                }
            }
        });
        let had = problems.is_empty();
        for p in problems {
            self.error(format!("{at}: {p}"));
        }
        resolved.ok().filter(|_| had)
    }

    fn resolve(&mut self, n: &Name, scope: Scope) -> Result<CExpr, String> {
        match n {
            Name::Ident(s) => {
                if let Some(&v) = self.params.get(s) {
                    return Ok(Expr::Const(v));
                }
                if s == "now" {
                    return Ok(Expr::Ref(Slot::Now));
                }
                if let Ok(f) = s.parse::<FieldId>() {
                    return Ok(Expr::Ref(Slot::Field(f)));
                }
                if let Some(st) = Stat::from_name(s) {
                    return Ok(Expr::Ref(Slot::Stat(st)));
                }
                let computed = if let Some(&m) = self.metrics.get(s) {
                    Slot::Metric(m)
                } else if let Some(&f) = self.features.get(s) {
                    Slot::Feature(f)
                } else {
                    return Err(format!("unknown name `{s}`"));
                };
                if !scope.computed {
                    return Err(format!("`{s}` is not available here; only packet fields, payload statistics and parameters are"));
                }
                Ok(Expr::Ref(computed))
            }
            Name::Table(t) => {
                if !scope.computed {
                    return Err(format!("table[{t}] is not available here"));
                }
                match self.tables.iter().position(|x| x == t) {
                    Some(i) => Ok(Expr::Ref(Slot::Table(i))),
                    None if t == RELATED_TABLE => Err("the related table holds keys, not numbers".into()),
                    None => Err(format!("unknown table `{t}`")),
                }
            }
            Name::Ctx(c) => {
                if !scope.computed {
                    return Err(format!("ctx[{c}] is not available here"));
                }
                let i = self.ctx_index(c);
                self.ctx_read.entry(i).or_insert_with(|| c.clone());
                Ok(Expr::Ref(Slot::Ctx(i)))
            }
        }
    }

    fn ctx_index(&mut self, name: &str) -> usize {
        match self.ctx_names.iter().position(|x| x == name) {
            Some(i) => i,
            None => {
                self.ctx_names.push(name.to_string());
                self.ctx_names.len() - 1
            }
        }
    }

    fn num(&mut self, n: Option<&Num>, at: &str) -> Option<f64> {
        match n? {
            Num::Lit(v) => Some(*v),
            Num::Param(p) => match self.params.get(p) {
                Some(&v) => Some(v),
                None => {
                    self.error(format!("{at}: unknown parameter `{p}`"));
                    None
                }
            },
        }
    }

    fn count(&mut self, n: Option<&Num>, default: u64, at: &str) -> u64 {
        match self.num(n, at) {
            None => default,
            Some(v) if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 => v as u64,
            Some(v) => {
                self.error(format!("{at}: expected a positive integer, got {v}"));
                default
            }
        }
    }

    fn fields(&mut self, spec: &str, at: &str) -> Option<Vec<FieldId>> {
        let mut out = Vec::new();
        let mut ok = true;
        for part in spec.split('|').map(str::trim) {
            match part.parse::<FieldId>() {
                Ok(f) => out.push(f),
                Err(e) => {
                    self.error(format!("{at}: {e}"));
                    ok = false;
                }
            }
        }
        (ok && !out.is_empty()).then_some(out)
    }

    fn key_spec(&mut self, spec: &str, at: &str) -> Option<KeySpec> {
        if spec.trim() == "key" {
            Some(KeySpec::Primary)
        } else {
            self.fields(spec, at).map(KeySpec::Fields)
        }
    }

    fn metric(&mut self, raw: &RawMetric) -> Option<MetricSpec> {
        let at = format!("metric {}", raw.id);
        let vd = raw.vd.as_ref().map(|d| {
            let window = self.num(d.window.as_ref(), &at);
            let swap_threshold = d.swap_threshold.as_ref().map(|t| self.count(Some(t), 1, &at));
            if window.is_none() && swap_threshold.is_none() {
                self.error(format!("{at}: detector needs `window` or `swap_threshold`"));
            }
            if window.is_some_and(|w| !(w > 0.0 && w.is_finite())) {
                self.error(format!("{at}: detector window must be positive"));
            }
            DetectorSpec {
                k: self.count(d.k.as_ref(), DEFAULT_HASHES as u64, &at) as u32,
                cells: self.count(d.cells.as_ref(), DEFAULT_CELLS as u64, &at) as usize,
                window,
                swap_threshold,
            }
        });
        let vm = match &raw.vm {
            None => None,
            Some(m) => {
                let kind = match m.kind.as_str() {
                    "cbf" => {
                        if m.tau.is_some() {
                            self.error(format!("{at}: `tau` only applies to kind = \"tbf\""));
                        }
                        MonitorKind::Cbf
                    }
                    "tbf" => match self.num(m.tau.as_ref(), &at) {
                        Some(tau) if tau > 0.0 && tau.is_finite() => MonitorKind::Tbf { tau },
                        Some(_) => {
                            self.error(format!("{at}: tau must be positive"));
                            MonitorKind::Cbf
                        }
                        None => {
                            self.error(format!("{at}: kind = \"tbf\" needs `tau`"));
                            MonitorKind::Cbf
                        }
                    },
                    other => {
                        self.error(format!("{at}: unknown monitor kind `{other}` (expected cbf or tbf)"));
                        MonitorKind::Cbf
                    }
                };
                Some(MonitorSpec {
                    kind,
                    k: self.count(m.k.as_ref(), DEFAULT_HASHES as u64, &at) as u32,
                    cells: self.count(m.cells.as_ref(), DEFAULT_CELLS as u64, &at) as usize,
                })
            }
        };
        if vd.is_none() && vm.is_none() {
            self.error(format!("{at}: needs a `vd` stage, a `vm` stage or both"));
        }
        let seed = raw.seed.unwrap_or_else(|| twox_hash::XxHash64::oneshot(0, raw.id.as_bytes()));
        Some(MetricSpec { id: raw.id.clone(), seed, vd, vm, chain: None })
    }

    fn event(&mut self, raw: &RawEvent) -> Option<EventDescriptor> {
        let at = format!("event {}", raw.id);
        let kind = match raw.kind.as_str() {
            "packet" => {
                if raw.timeout.is_some() {
                    self.error(format!("{at}: `timeout` only applies to timeout events"));
                }
                let filter = match &raw.filter {
                    Some(f) => self.expr(f, &format!("{at} filter"), PACKET_ONLY)?,
                    None => Expr::Const(1.0),
                };
                let Some(key) = &raw.key else {
                    self.error(format!("{at}: packet events need a `key`"));
                    return None;
                };
                let key = self.fields(key, &at)?;
                let related = match &raw.related {
                    Some(r) => Some(self.fields(r, &at)?),
                    None => None,
                };
                EventKind::Packet { filter, key, related }
            }
            "timeout" => {
                if raw.filter.is_some() || raw.key.is_some() || raw.related.is_some() {
                    self.error(format!("{at}: timeout events take their key from the timer; remove filter/key/related"));
                }
                let Some(t) = &raw.timeout else {
                    self.error(format!("{at}: timeout events need `timeout`"));
                    return None;
                };
                match self.timeouts.iter().position(|x| x == t) {
                    Some(timeout) => EventKind::Timeout { timeout },
                    None => {
                        self.error(format!("{at}: unknown timeout `{t}`"));
                        return None;
                    }
                }
            }
            other => {
                self.error(format!("{at}: unknown event type `{other}` (expected packet or timeout)"));
                return None;
            }
        };
        Some(EventDescriptor { id: raw.id.clone(), kind })
    }

    fn mop(&mut self, src: &str, at: &str) -> Option<Mop> {
        let (name, args) = match split_call(src) {
            Ok(c) => c,
            Err(e) => {
                self.syntax_error(at, e);
                return None;
            }
        };
        let metric = match args.first().map(|m| self.metrics.get(m.as_str()).copied()) {
            Some(Some(m)) => m,
            Some(None) => {
                self.error(format!("{at}: unknown metric `{}`", args[0]));
                return None;
            }
            None => {
                self.error(format!("{at}: `{src}` needs a metric"));
                return None;
            }
        };
        match (name.to_ascii_lowercase().as_str(), args.len()) {
            ("set", 2..=4) => {
                let dfk = self.key_spec(&args[1], at)?;
                let mfk = match args.get(2) {
                    Some(k) => self.key_spec(k, at)?,
                    None => dfk.clone(),
                };
                let qty = match args.get(3) {
                    Some(q) => self.expr(q, at, PACKET_ONLY)?,
                    None => Expr::Const(1.0),
                };
                Some(Mop::Set { metric, dfk, mfk, qty })
            }
            ("get", 2) => Some(Mop::Get { metric, key: self.key_spec(&args[1], at)? }),
            ("set", _) => {
                self.error(format!("{at}: set takes (metric, dfk[, mfk[, qty]])"));
                None
            }
            ("get", _) => {
                self.error(format!("{at}: get takes (metric, key)"));
                None
            }
            _ => {
                self.error(format!("{at}: unknown metric operation `{name}` (expected set or get)"));
                None
            }
        }
    }

    fn item(&mut self, src: &str, at: &str) -> Option<Item> {
        if let Some(eq) = src.find('=') {
            let (name, rest) = (src[..eq].trim(), &src[eq + 1..]);
            if is_ident(name) && !rest.starts_with('=') {
                let expr = self.expr(rest, at, ANYTHING)?;
                return Some(Item { name: name.to_string(), expr });
            }
        }
        let expr = self.expr(src, at, ANYTHING)?;
        Some(Item { name: src.trim().to_string(), expr })
    }

    fn timeout_arg(&mut self, name: &str, at: &str) -> Option<usize> {
        let t = self.timeouts.iter().position(|x| x == name);
        if t.is_none() {
            self.error(format!("{at}: unknown timeout `{name}`"));
        }
        t
    }

    fn state_arg(&mut self, name: &str, at: &str) -> Option<usize> {
        let s = self.states.get(unquote(name)).copied();
        if s.is_none() {
            self.error(format!("{at}: unknown state `{}`", unquote(name)));
        }
        s
    }

    fn action(&mut self, src: &str, at: &str) -> Option<Action> {
        let text = if src.contains('(') { src.to_string() } else { format!("{}()", src.trim()) };
        let (name, args) = match split_call(&text) {
            Ok(c) => c,
            Err(e) => {
                self.syntax_error(at, e);
                return None;
            }
        };
        let upper = name.to_ascii_uppercase();
        let arity_error = |c: &mut Compiler, shape: &str| {
            c.error(format!("{at}: {upper} takes {shape}, got {} argument(s)", args.len()));
            None
        };
        match upper.as_str() {
            "SET_TIMEOUT" | "UPDATE_TIMEOUT" => {
                if args.len() != 2 {
                    return arity_error(self, "(timeout, delay)");
                }
                let timeout = self.timeout_arg(&args[0], at);
                let delay = self.expr(&args[1], at, ANYTHING);
                let (timeout, delay) = (timeout?, delay?);
                Some(if upper == "SET_TIMEOUT" {
                    Action::SetTimeout { timeout, delay }
                } else {
                    Action::UpdateTimeout { timeout, delay }
                })
            }
            "SAVE_TIMEOUT_CTX" => {
                if args.len() < 2 {
                    return arity_error(self, "(timeout, value...)");
                }
                let timeout = self.timeout_arg(&args[0], at);
                let mut items = Vec::new();
                for a in &args[1..] {
                    if let Some(it) = self.item(a, at) {
                        let i = self.ctx_index(&it.name);
                        self.ctx_written.insert(i);
                        items.push((i, it.expr));
                    }
                }
                Some(Action::SaveTimeoutCtx { timeout: timeout?, items })
            }
            "DROP" | "ALLOW" => {
                if !args.is_empty() {
                    return arity_error(self, "no arguments");
                }
                Some(if upper == "DROP" { Action::Drop } else { Action::Allow })
            }
            "MARK" => {
                if args.len() != 1 {
                    return arity_error(self, "(tag)");
                }
                Some(Action::Mark(unquote(&args[0]).to_string()))
            }
            "NEXT_STATUS" => {
                if args.len() != 2 {
                    return arity_error(self, "(key, state)");
                }
                let key = self.key_spec(&args[0], at);
                let state = self.state_arg(&args[1], at);
                Some(Action::NextStatus { key: key?, state: state? })
            }
            "UPDATE_TABLE" => {
                if args.len() != 3 {
                    return arity_error(self, "(table, key, value | delete | key)");
                }
                let table = if args[0] == RELATED_TABLE {
                    Some(TableRef::Related)
                } else {
                    let t = self.tables.iter().position(|x| *x == args[0]).map(TableRef::Secondary);
                    if t.is_none() {
                        self.error(format!("{at}: unknown table `{}`", args[0]));
                    }
                    t
                };
                let key = self.key_spec(&args[1], at);
                let write = match (args[2].as_str(), table) {
                    ("delete", _) => Some(TableWrite::Delete),
                    ("key", Some(TableRef::Related)) => Some(TableWrite::PrimaryKey),
                    (_, Some(TableRef::Related)) => {
                        self.error(format!("{at}: the related table stores `key` or `delete`"));
                        None
                    }
                    (v, _) => self.expr(v, at, ANYTHING).map(TableWrite::Value),
                };
                Some(Action::UpdateTable { table: table?, key: key?, write: write? })
            }
            "PRINT" => {
                if args.is_empty() {
                    return arity_error(self, "(message, value...)");
                }
                let items: Vec<Item> = args[1..].iter().filter_map(|a| self.item(a, at)).collect();
                (items.len() == args.len() - 1).then(|| Action::Print { message: unquote(&args[0]).to_string(), items })
            }
            "EXPORT" => {
                if args.is_empty() {
                    return Some(Action::Export { items: None });
                }
                let items: Vec<Item> = args.iter().filter_map(|a| self.item(a, at)).collect();
                (items.len() == args.len()).then_some(Action::Export { items: Some(items) })
            }
            _ => {
                self.error(format!("{at}: unknown action `{name}`"));
                None
            }
        }
    }

    fn decision(&mut self, raw: &RawDecision, at: &str) -> Option<Decision> {
        let when = match &raw.when {
            Some(w) => self.expr(w, &format!("{at} when"), ANYTHING),
            None => Some(Expr::Const(1.0)),
        };
        let mut actions = Vec::new();
        let mut ok = true;
        for (i, a) in raw.actions.iter().enumerate() {
            match self.action(a, &format!("{at} action {}", i + 1)) {
                Some(act) => actions.push(act),
                None => ok = false,
            }
        }
        let next = match raw.next.as_deref() {
            None | Some("stay") => Some(None),
            Some(s) => self.state_arg(s, at).map(Some),
        };
        let (when, next) = (when?, next?);
        ok.then_some(Decision { when, actions, next })
    }
}

fn check_unique<'a>(c: &mut Compiler, what: &str, names: impl Iterator<Item = &'a str>) {
    let mut seen = BTreeSet::new();
    for n in names {
        if !seen.insert(n) {
            c.error(format!("duplicate {what} `{n}`"));
        }
    }
}

/// Orders features so every dependency precedes its user; reports cycles.
fn feature_order(features: &[Option<FeatureSpec>], ids: &[String], errors: &mut Vec<String>) -> Vec<usize> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    fn visit(
        i: usize,
        features: &[Option<FeatureSpec>],
        ids: &[String],
        marks: &mut [Mark],
        path: &mut Vec<usize>,
        out: &mut Vec<usize>,
        errors: &mut Vec<String>,
    ) {
        match marks[i] {
            Mark::Done => return,
            Mark::Active => {
                let start = path.iter().position(|&p| p == i).unwrap_or(0);
                let mut cycle: Vec<&str> = path[start..].iter().map(|&p| ids[p].as_str()).collect();
                cycle.push(&ids[i]);
                errors.push(format!("feature cycle: {}", cycle.join(" -> ")));
                return;
            }
            Mark::New => {}
        }
        marks[i] = Mark::Active;
        path.push(i);
        if let Some(f) = &features[i] {
            for r in f.expr.refs() {
                if let Slot::Feature(d) = r {
                    visit(*d, features, ids, marks, path, out, errors);
                }
            }
        }
        path.pop();
        marks[i] = Mark::Done;
        out.push(i);
    }
    let mut marks = vec![Mark::New; features.len()];
    let mut out = Vec::with_capacity(features.len());
    for i in 0..features.len() {
        visit(i, features, ids, &mut marks, &mut Vec::new(), &mut out, errors);
    }
    out
}

pub(super) fn compile(doc: RawDocument, overrides: &BTreeMap<String, f64>) -> Result<Program, ProgramError> {
    let mut c = Compiler {
        params: doc.params.clone(),
        metrics: HashMap::new(),
        features: HashMap::new(),
        tables: doc.program.tables.clone(),
        timeouts: doc.program.timeouts.clone(),
        states: HashMap::new(),
        ctx_names: Vec::new(),
        ctx_written: BTreeSet::new(),
        ctx_read: BTreeMap::new(),
        errors: Vec::new(),
        syntax: None,
    };
    for (k, v) in overrides {
        match c.params.get_mut(k) {
            Some(slot) => *slot = *v,
            None => c.error(format!("override of undeclared parameter `{k}`")),
        }
    }

    // Namespaces shared by expressions must not overlap.
    let mut names: Vec<(&str, &str)> = Vec::new();
    names.extend(c.params.keys().map(|p| ("parameter", p.as_str())));
    names.extend(doc.metrics.iter().map(|m| ("metric", m.id.as_str())));
    names.extend(doc.features.iter().map(|f| ("feature", f.id.as_str())));
    let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
    let mut clash = Vec::new();
    for (kind, n) in &names {
        if !is_ident(n) {
            clash.push(format!("{kind} name `{n}` must be an identifier"));
        } else if RESERVED.contains(n) || n.parse::<FieldId>().is_ok() || Stat::from_name(n).is_some() {
            clash.push(format!("{kind} name `{n}` is reserved"));
        } else if let Some(prev) = owner.insert(n, kind) {
            clash.push(format!("`{n}` declared as both {prev} and {kind}"));
        }
    }
    c.errors.extend(clash);
    check_unique(&mut c, "table", doc.program.tables.iter().map(String::as_str));
    check_unique(&mut c, "timeout", doc.program.timeouts.iter().map(String::as_str));
    check_unique(&mut c, "event", doc.events.iter().map(|e| e.id.as_str()));
    check_unique(&mut c, "state", doc.states.iter().map(|s| s.name.as_str()));
    if doc.program.tables.iter().any(|t| t == RELATED_TABLE) {
        c.error(format!("table name `{RELATED_TABLE}` is reserved"));
    }

    for (i, m) in doc.metrics.iter().enumerate() {
        c.metrics.entry(m.id.clone()).or_insert(i);
    }
    for (i, f) in doc.features.iter().enumerate() {
        c.features.entry(f.id.clone()).or_insert(i);
    }
    for (i, s) in doc.states.iter().enumerate() {
        c.states.entry(s.name.clone()).or_insert(i);
    }

    let mut metrics: Vec<Option<MetricSpec>> = doc.metrics.iter().map(|m| c.metric(m)).collect();
    for (i, raw) in doc.metrics.iter().enumerate() {
        if let Some(parent) = &raw.chain {
            match c.metrics.get(parent) {
                Some(&p) if p == i => c.error(format!("metric {}: chained to itself", raw.id)),
                Some(&p) => {
                    if let Some(m) = metrics[i].as_mut() {
                        m.chain = Some(p);
                    }
                }
                None => c.error(format!("metric {}: unknown chain parent `{parent}`", raw.id)),
            }
        }
    }
    for start in 0..metrics.len() {
        let mut seen = vec![start];
        let mut cur = start;
        while let Some(p) = metrics[cur].as_ref().and_then(|m| m.chain) {
            if p == start {
                let path: Vec<&str> = seen.iter().chain([&start]).map(|&i| doc.metrics[i].id.as_str()).collect();
                c.error(format!("metric chain cycle: {}", path.join(" -> ")));
                break;
            }
            if seen.contains(&p) {
                break;
            }
            seen.push(p);
            cur = p;
        }
    }

    let features: Vec<Option<FeatureSpec>> = doc
        .features
        .iter()
        .map(|f| {
            c.expr(&f.expr, &format!("feature {}", f.id), ANYTHING)
                .map(|expr| FeatureSpec { id: f.id.clone(), expr })
        })
        .collect();
    let ids: Vec<String> = doc.features.iter().map(|f| f.id.clone()).collect();
    let order = feature_order(&features, &ids, &mut c.errors);

    if doc.events.is_empty() {
        c.error("program declares no events".into());
    }
    let events: Vec<Option<EventDescriptor>> = doc.events.iter().map(|e| c.event(e)).collect();
    let event_index: HashMap<&str, usize> = doc.events.iter().enumerate().map(|(i, e)| (e.id.as_str(), i)).collect();

    let default_state = c.states.get(&doc.program.default_state).copied();
    if default_state.is_none() {
        c.error(format!("default state `{}` is not declared", doc.program.default_state));
    }

    let mut states = Vec::with_capacity(doc.states.len());
    for s in &doc.states {
        let mut handlers: Vec<Option<Handler>> = vec![None; doc.events.len()];
        for h in &s.on {
            let at = format!("state {} on {}", s.name, h.event);
            let Some(&ev) = event_index.get(h.event.as_str()) else {
                c.error(format!("{at}: unknown event `{}`", h.event));
                continue;
            };
            if handlers[ev].is_some() {
                c.error(format!("{at}: duplicate handler"));
                continue;
            }
            let mops: Vec<Mop> = h.mops.iter().enumerate().filter_map(|(i, m)| c.mop(m, &format!("{at} mop {}", i + 1))).collect();
            // A chained set is only meaningful after its parent's set.
            for (i, m) in mops.iter().enumerate() {
                if let Mop::Set { metric, .. } = m {
                    if let Some(p) = metrics[*metric].as_ref().and_then(|s| s.chain) {
                        let parent_first = mops[..i].iter().any(|x| matches!(x, Mop::Set { metric, .. } if *metric == p));
                        if !parent_first {
                            c.error(format!(
                                "{at}: chained metric {} is set without a preceding set of its parent {}",
                                doc.metrics[*metric].id, doc.metrics[p].id
                            ));
                        }
                    }
                }
            }
            let decisions: Vec<Decision> = h
                .decide
                .iter()
                .enumerate()
                .filter_map(|(i, d)| c.decision(d, &format!("{at} decision {}", i + 1)))
                .collect();
            handlers[ev] = Some(Handler { mops, decisions });
        }
        states.push(State { name: s.name.clone(), handlers });
    }

    let unread: Vec<String> = c
        .ctx_read
        .iter()
        .filter(|(i, _)| !c.ctx_written.contains(i))
        .map(|(_, n)| format!("ctx[{n}] is read but never saved by SAVE_TIMEOUT_CTX"))
        .collect();
    c.errors.extend(unread);

    if let Some(e) = c.syntax {
        return Err(e);
    }
    if !c.errors.is_empty() {
        return Err(ProgramError::Validation(c.errors));
    }
    Ok(Program {
        name: doc.program.name,
        params: c.params,
        default_state: default_state.expect("checked above"),
        states,
        events: events.into_iter().map(|e| e.expect("checked above")).collect(),
        metrics: metrics.into_iter().map(|m| m.expect("checked above")).collect(),
        features: features.into_iter().map(|f| f.expect("checked above")).collect(),
        feature_order: order,
        tables: c.tables,
        timeouts: c.timeouts,
        ctx_names: c.ctx_names,
        status_capacity: doc.program.status_capacity.unwrap_or(DEFAULT_STATUS_CAPACITY),
    })
}
