//! Lifecycle-aware forward taint analysis.
//!
//! Apps have no `main`, so each component gets a synthetic driver that calls
//! its lifecycle methods in framework order with the registered callbacks in
//! a loop between `onResume` and `onPause`. The analysis is an
//! interprocedural worklist fixpoint over that driver: flow- and
//! field-sensitive (access paths truncated at `k` fields), context- and
//! object-insensitive. Heap state is modelled as one abstract object per
//! class, reached through the implicit `this` local.
//!
//! When a tainted value is stored into `base.f`, an optional alias pass adds
//! the same field taint to every local that holds the same object as `base`
//! at that point, following the copy chain within the method.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{SinkCategory, SourceCategory, SourceSinkCatalog};
use crate::ir::{declaring_class, AppModel, ComponentKind, MethodBody, Statement, StmtId, THIS};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    /// Run the copy-chain alias pass on tainted field stores.
    pub alias: bool,
    /// Maximum field-chain length of an access path.
    pub access_path_k: usize,
    /// Statement transfers allowed before the analysis gives up.
    pub max_iterations: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            alias: true,
            access_path_k: 2,
            max_iterations: 10_000,
        }
    }
}

/// Driver for one component.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComponentDriver {
    pub component: String,
    /// Lifecycle methods run once before the callback loop.
    pub prefix: Vec<String>,
    /// Methods that may run any number of times, in any order.
    pub callback_loop: Vec<String>,
    /// Lifecycle methods run once after the callback loop.
    pub suffix: Vec<String>,
}

impl ComponentDriver {
    /// Every driven method: prefix, loop body, suffix.
    pub fn methods(&self) -> impl Iterator<Item = &String> {
        self.prefix
            .iter()
            .chain(&self.callback_loop)
            .chain(&self.suffix)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DummyMain {
    pub drivers: Vec<ComponentDriver>,
}

impl DummyMain {
    pub fn is_empty(&self) -> bool {
        self.drivers.is_empty()
    }

    /// Driver successors of each driven method.
    fn successors(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut succ: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for d in &self.drivers {
            // Nodes are grouped: each prefix method, the loop, each suffix method.
            let mut stages: Vec<Vec<&str>> = d.prefix.iter().map(|m| vec![m.as_str()]).collect();
            let loop_stage: Vec<&str> = d.callback_loop.iter().map(String::as_str).collect();
            for m in &loop_stage {
                for n in &loop_stage {
                    succ.entry(m).or_default().insert(n);
                }
            }
            if !loop_stage.is_empty() {
                stages.push(loop_stage);
            }
            stages.extend(d.suffix.iter().map(|m| vec![m.as_str()]));
            // The loop may run zero times, so its predecessors also reach what follows it.
            let loop_at = (!d.callback_loop.is_empty()).then_some(d.prefix.len());
            for i in 0..stages.len() {
                for j in i + 1..stages.len() {
                    let adjacent = j == i + 1 || (Some(i + 1) == loop_at && j == i + 2);
                    if !adjacent {
                        continue;
                    }
                    for a in &stages[i] {
                        for b in &stages[j] {
                            succ.entry(a).or_default().insert(b);
                        }
                    }
                }
            }
        }
        succ
    }
}

pub fn synthesize_dummy_main(app: &AppModel) -> DummyMain {
    let drivers = app
        .components
        .iter()
        .map(|c| {
            let mut d = ComponentDriver {
                component: c.name.clone(),
                prefix: Vec::new(),
                callback_loop: Vec::new(),
                suffix: Vec::new(),
            };
            for lc in &c.lifecycle {
                let m = c.method_name(lc.name());
                if c.kind == ComponentKind::Receiver {
                    d.callback_loop.push(m);
                } else if lc.is_prefix() {
                    d.prefix.push(m);
                } else {
                    d.suffix.push(m);
                }
            }
            d.callback_loop
                .extend(c.callbacks.iter().map(|cb| c.method_name(cb)));
            d
        })
        .collect();
    DummyMain { drivers }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Root {
    Local(String),
    /// The single abstract object of a class.
    Heap(String),
    Return,
}

/// A tainted access path: the value at `root.fields[0].fields[1]...` and
/// everything reachable from it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct AccessPath {
    root: Root,
    fields: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct Fact {
    path: AccessPath,
    origin: StmtId,
}

type FactSet = BTreeSet<Fact>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaintFlow {
    /// API signature of the source call.
    pub source_method: String,
    pub source_site: StmtId,
    /// API signature of the sink call.
    pub sink_method: String,
    pub sink_site: StmtId,
    pub source_category: SourceCategory,
    pub sink_category: SinkCategory,
    /// Methods the taint travelled through, from the source site's method to
    /// the sink site's method.
    pub path: Vec<String>,
}

impl TaintFlow {
    fn sort_key(&self) -> (&str, &str, &StmtId, &StmtId) {
        (
            &self.source_method,
            &self.sink_method,
            &self.source_site,
            &self.sink_site,
        )
    }
}

/// The JSON flow report for one app.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowReport {
    pub app: String,
    pub flows: Vec<TaintFlow>,
}

impl FlowReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("flow report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Error)]
pub enum TaintError {
    #[error("analysis exceeded {max_iterations} worklist steps; {} partial flow(s) are unsound", partial.len())]
    BudgetExceeded {
        max_iterations: usize,
        partial: Vec<TaintFlow>,
    },
}

/// Runs the analysis and returns every source-to-sink flow, sorted by
/// source signature, sink signature, then site ids.
pub fn analyze(
    app: &AppModel,
    catalog: &SourceSinkCatalog,
    config: &AnalysisConfig,
) -> Result<Vec<TaintFlow>, TaintError> {
    let driver = synthesize_dummy_main(app);
    let mut engine = Engine::new(app, catalog, config, &driver);
    let outcome = engine.run();
    let flows = engine.flows();
    match outcome {
        Ok(()) => Ok(flows),
        Err(()) => Err(TaintError::BudgetExceeded {
            max_iterations: config.max_iterations,
            partial: flows,
        }),
    }
}

pub fn analyze_report(
    app: &AppModel,
    catalog: &SourceSinkCatalog,
    config: &AnalysisConfig,
) -> Result<FlowReport, TaintError> {
    Ok(FlowReport {
        app: app.app_name.clone(),
        flows: analyze(app, catalog, config)?,
    })
}

struct Engine<'a> {
    app: &'a AppModel,
    catalog: &'a SourceSinkCatalog,
    config: &'a AnalysisConfig,
    driver_succ: BTreeMap<&'a str, BTreeSet<&'a str>>,
    entry: BTreeMap<String, FactSet>,
    exit: BTreeMap<String, FactSet>,
    callers: BTreeMap<String, BTreeSet<String>>,
    /// First method from which each origin reached a method.
    pred: BTreeMap<(String, StmtId), Option<String>>,
    reported: BTreeSet<(StmtId, StmtId)>,
    worklist: VecDeque<String>,
    queued: BTreeSet<String>,
    steps: usize,
}

impl<'a> Engine<'a> {
    fn new(
        app: &'a AppModel,
        catalog: &'a SourceSinkCatalog,
        config: &'a AnalysisConfig,
        driver: &'a DummyMain,
    ) -> Self {
        let mut e = Self {
            app,
            catalog,
            config,
            driver_succ: driver.successors(),
            entry: BTreeMap::new(),
            exit: BTreeMap::new(),
            callers: BTreeMap::new(),
            pred: BTreeMap::new(),
            reported: BTreeSet::new(),
            worklist: VecDeque::new(),
            queued: BTreeSet::new(),
            steps: 0,
        };
        for d in &driver.drivers {
            for m in d.methods() {
                e.enqueue(m);
            }
        }
        e
    }

    fn enqueue(&mut self, m: &str) {
        if self.app.methods.contains_key(m) && self.queued.insert(m.to_string()) {
            self.worklist.push_back(m.to_string());
        }
    }

    fn run(&mut self) -> Result<(), ()> {
        while let Some(m) = self.worklist.pop_front() {
            self.queued.remove(&m);
            let exit = self.process(&m)?;
            let old = self.exit.entry(m.clone()).or_default();
            let before = old.len();
            old.extend(exit);
            if old.len() == before {
                continue;
            }
            let heap: FactSet = old.iter().filter(|f| is_heap(&f.path)).cloned().collect();
            for caller in self.callers.get(&m).cloned().unwrap_or_default() {
                self.enqueue(&caller);
            }
            let succs: Vec<&str> = self
                .driver_succ
                .get(m.as_str())
                .map(|s| s.iter().copied().collect())
                .unwrap_or_default();
            for s in succs {
                if self.add_entry(s, &m, heap.iter().cloned()) {
                    self.enqueue(s);
                }
            }
        }
        Ok(())
    }

    /// Joins `facts` into the entry of `target`; returns whether it grew.
    fn add_entry(&mut self, target: &str, from: &str, facts: impl Iterator<Item = Fact>) -> bool {
        let mut changed = false;
        for f in facts {
            self.note_arrival(target, &f.origin, Some(from));
            changed |= self.entry.entry(target.to_string()).or_default().insert(f);
        }
        changed
    }

    fn note_arrival(&mut self, method: &str, origin: &StmtId, from: Option<&str>) {
        self.pred
            .entry((method.to_string(), origin.clone()))
            .or_insert_with(|| from.map(str::to_string));
    }

    fn root_of(&self, method: &str, local: &str) -> Root {
        if local == THIS {
            Root::Heap(declaring_class(method).to_string())
        } else {
            Root::Local(local.to_string())
        }
    }

    /// Analyzes one method body from its current entry facts and returns its
    /// exit facts (heap facts, param field facts and return facts).
    fn process(&mut self, m: &str) -> Result<FactSet, ()> {
        let body: &'a MethodBody = &self.app.methods[m];
        let mut facts: FactSet = self.entry.get(m).cloned().unwrap_or_default();
        let mut returned: Option<FactSet> = None;

        for (i, stmt) in body.statements.iter().enumerate() {
            self.steps += 1;
            if self.steps > self.config.max_iterations {
                return Err(());
            }
            match stmt {
                Statement::Copy { dst, src } => {
                    let (d, s) = (self.root_of(m, dst), self.root_of(m, src));
                    let gen = rooted(&facts, &s)
                        .map(|f| reroot(f, &d, &[]))
                        .collect::<Vec<_>>();
                    kill(&mut facts, &d);
                    facts.extend(gen);
                }
                Statement::LoadField { dst, base, field } => {
                    let (d, b) = (self.root_of(m, dst), self.root_of(m, base));
                    let gen: Vec<Fact> = rooted(&facts, &b)
                        .filter_map(|f| match f.path.fields.split_first() {
                            None => Some(reroot(f, &d, &[])),
                            Some((first, rest)) if first == field => Some(Fact {
                                path: AccessPath {
                                    root: d.clone(),
                                    fields: rest.to_vec(),
                                },
                                origin: f.origin.clone(),
                            }),
                            Some(_) => None,
                        })
                        .collect();
                    kill(&mut facts, &d);
                    facts.extend(gen);
                }
                Statement::StoreField { base, field, src } => {
                    let s = self.root_of(m, src);
                    let tainted: Vec<Fact> = rooted(&facts, &s).cloned().collect();
                    if tainted.is_empty() {
                        continue;
                    }
                    let mut bases = vec![base.as_str()];
                    if self.config.alias {
                        bases.extend(aliases_at(body, i, base));
                    }
                    for b in bases {
                        let root = self.root_of(m, b);
                        for f in &tainted {
                            let mut fields = Vec::with_capacity(f.path.fields.len() + 1);
                            fields.push(field.clone());
                            fields.extend(f.path.fields.iter().cloned());
                            fields.truncate(self.config.access_path_k);
                            facts.insert(Fact {
                                path: AccessPath {
                                    root: root.clone(),
                                    fields,
                                },
                                origin: f.origin.clone(),
                            });
                        }
                    }
                }
                Statement::Invoke { dst, callee, args } => {
                    let site = StmtId::new(m, i);
                    if self.app.is_local_method(callee) {
                        self.local_call(m, &mut facts, dst.as_deref(), callee, args);
                    } else {
                        self.api_call(m, site, &mut facts, dst.as_deref(), callee, args);
                    }
                }
                Statement::Return(value) => {
                    let mut out = FactSet::new();
                    if let Some(v) = value {
                        let r = self.root_of(m, v);
                        out.extend(rooted(&facts, &r).map(|f| reroot(f, &Root::Return, &[])));
                    }
                    returned = Some(out);
                    break;
                }
            }
        }

        let mut exit = returned.unwrap_or_default();
        exit.extend(
            facts
                .into_iter()
                .filter(|f| is_heap(&f.path) || is_param_field(&f.path, body)),
        );
        Ok(exit)
    }

    fn local_call(
        &mut self,
        m: &str,
        facts: &mut FactSet,
        dst: Option<&str>,
        callee: &str,
        args: &[String],
    ) {
        let params = &self.app.methods[callee].params;
        let mut into: Vec<Fact> = facts.iter().filter(|f| is_heap(&f.path)).cloned().collect();
        for (arg, param) in args.iter().zip(params) {
            let a = self.root_of(m, arg);
            let p = Root::Local(param.clone());
            into.extend(rooted(facts, &a).map(|f| reroot(f, &p, &[])));
        }
        self.callers
            .entry(callee.to_string())
            .or_default()
            .insert(m.to_string());
        let grew = self.add_entry(callee, m, into.into_iter());
        if grew || !self.exit.contains_key(callee) {
            self.enqueue(callee);
        }

        let back: Vec<Fact> = self
            .exit
            .get(callee)
            .map(|e| e.iter().cloned().collect())
            .unwrap_or_default();
        if let Some(d) = dst {
            kill(facts, &self.root_of(m, d));
        }
        for f in back {
            let mapped = match &f.path.root {
                Root::Heap(_) => Some(f.clone()),
                Root::Return => dst.map(|d| reroot(&f, &self.root_of(m, d), &[])),
                Root::Local(p) => params
                    .iter()
                    .position(|q| q == p)
                    .map(|k| reroot(&f, &self.root_of(m, &args[k]), &[])),
            };
            if let Some(f) = mapped {
                self.note_arrival(m, &f.origin, Some(callee));
                facts.insert(f);
            }
        }
    }

    fn api_call(
        &mut self,
        m: &str,
        site: StmtId,
        facts: &mut FactSet,
        dst: Option<&str>,
        callee: &str,
        args: &[String],
    ) {
        let class = self.catalog.classify(callee);
        let mut origins = BTreeSet::new();
        for arg in args {
            let a = self.root_of(m, arg);
            origins.extend(rooted(facts, &a).map(|f| f.origin.clone()));
        }
        if class.is_sink() {
            for o in &origins {
                self.reported.insert((o.clone(), site.clone()));
            }
        }
        let Some(d) = dst else { return };
        let d = self.root_of(m, d);
        kill(facts, &d);
        if class.is_source() {
            self.note_arrival(m, &site, None);
            origins.insert(site);
        }
        for o in origins {
            facts.insert(Fact {
                path: AccessPath {
                    root: d.clone(),
                    fields: Vec::new(),
                },
                origin: o,
            });
        }
    }

    fn path_for(&self, origin: &StmtId, sink_method: &str) -> Vec<String> {
        let mut rev = vec![sink_method.to_string()];
        let mut cur = sink_method.to_string();
        while cur != origin.method && rev.len() <= self.app.methods.len() + 1 {
            match self.pred.get(&(cur.clone(), origin.clone())) {
                Some(Some(p)) => {
                    cur = p.clone();
                    rev.push(cur.clone());
                }
                _ => {
                    rev.push(origin.method.clone());
                    break;
                }
            }
        }
        rev.reverse();
        rev
    }

    fn flows(&self) -> Vec<TaintFlow> {
        let callee_of = |id: &StmtId| match self.app.statement(id) {
            Some(Statement::Invoke { callee, .. }) => callee.clone(),
            _ => unreachable!("flow endpoints are call sites"),
        };
        let mut flows: Vec<TaintFlow> = self
            .reported
            .iter()
            .map(|(src, snk)| {
                let source_method = callee_of(src);
                let sink_method = callee_of(snk);
                TaintFlow {
                    source_category: self
                        .catalog
                        .classify(&source_method)
                        .source
                        .expect("origin is a source call"),
                    sink_category: self
                        .catalog
                        .classify(&sink_method)
                        .sink
                        .expect("report site is a sink call"),
                    path: self.path_for(src, &snk.method),
                    source_method,
                    source_site: src.clone(),
                    sink_method,
                    sink_site: snk.clone(),
                }
            })
            .collect();
        flows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        flows
    }
}

fn is_heap(p: &AccessPath) -> bool {
    matches!(p.root, Root::Heap(_))
}

fn is_param_field(p: &AccessPath, body: &MethodBody) -> bool {
    matches!(&p.root, Root::Local(l) if !p.fields.is_empty() && body.params.contains(l))
}

fn rooted<'f>(facts: &'f FactSet, root: &'f Root) -> impl Iterator<Item = &'f Fact> + 'f {
    facts.iter().filter(move |f| &f.path.root == root)
}

fn reroot(f: &Fact, root: &Root, prefix: &[String]) -> Fact {
    let mut fields = prefix.to_vec();
    fields.extend(f.path.fields.iter().cloned());
    Fact {
        path: AccessPath {
            root: root.clone(),
            fields,
        },
        origin: f.origin.clone(),
    }
}

fn kill(facts: &mut FactSet, root: &Root) {
    facts.retain(|f| &f.path.root != root);
}

/// Locals other than `base` holding the same object as `base` just before
/// statement `at`, resolved through copy assignments earlier in the method.
fn aliases_at<'b>(body: &'b MethodBody, at: usize, base: &str) -> Vec<&'b str> {
    let mut value: BTreeMap<&str, usize> = BTreeMap::new();
    let mut next = 0usize;
    let mut fresh = || {
        next += 1;
        next
    };
    value.insert(THIS, fresh());
    for p in &body.params {
        value.insert(p, fresh());
    }
    for stmt in &body.statements[..at] {
        match stmt {
            Statement::Copy { dst, src } => {
                let v = match value.get(src.as_str()) {
                    Some(v) => *v,
                    None => fresh(),
                };
                value.insert(dst, v);
            }
            other => {
                if let Some(d) = other.defined_local() {
                    let v = fresh();
                    value.insert(d, v);
                }
            }
        }
    }
    let Some(target) = value.get(base).copied() else {
        return Vec::new();
    };
    value
        .into_iter()
        .filter(|(l, v)| *v == target && *l != base)
        .map(|(l, _)| l)
        .collect()
}
