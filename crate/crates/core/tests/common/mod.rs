//! Test-only oracles shared by the integration suites.
//!
//! Nothing here calls into the analysis under test: the taint oracle runs
//! the app concretely over every bounded driver schedule, and the Bayesian
//! network oracle keeps its own CPT table.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::PathBuf;

use droidmark::bayesnet::{BayesNetwork, Dag, Variable};
use droidmark::catalog::SourceSinkCatalog;
use droidmark::ir::{declaring_class, AppModel, ComponentKind, Lifecycle, Statement, StmtId, THIS};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Planted flows from a `.expected` sidecar.
pub fn expected_flows(name: &str) -> BTreeSet<(StmtId, StmtId)> {
    read_fixture(name)
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| {
            let (a, b) = l.split_once('\t').expect("tab-separated");
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Concrete taint interpreter

#[derive(Default, Clone)]
struct Obj {
    labels: BTreeSet<StmtId>,
    fields: BTreeMap<String, usize>,
}

struct Run<'a> {
    app: &'a AppModel,
    catalog: &'a SourceSinkCatalog,
    heap: Vec<Obj>,
    singletons: HashMap<String, usize>,
    flows: &'a mut BTreeSet<(StmtId, StmtId)>,
}

impl Run<'_> {
    fn alloc(&mut self, labels: BTreeSet<StmtId>) -> usize {
        self.heap.push(Obj {
            labels,
            fields: BTreeMap::new(),
        });
        self.heap.len() - 1
    }

    fn singleton(&mut self, class: &str) -> usize {
        if let Some(o) = self.singletons.get(class) {
            return *o;
        }
        let o = self.alloc(BTreeSet::new());
        self.singletons.insert(class.to_string(), o);
        o
    }

    fn deep_labels(&self, root: usize) -> BTreeSet<StmtId> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![root];
        let mut out = BTreeSet::new();
        while let Some(o) = stack.pop() {
            if !seen.insert(o) {
                continue;
            }
            out.extend(self.heap[o].labels.iter().cloned());
            stack.extend(self.heap[o].fields.values().copied());
        }
        out
    }

    fn call(&mut self, method: &str, args: Vec<usize>, depth: usize) -> usize {
        if depth > 32 {
            return self.alloc(BTreeSet::new());
        }
        let body = &self.app.methods[method];
        let mut env: HashMap<&str, usize> = HashMap::new();
        let this = self.singleton(declaring_class(method));
        env.insert(THIS, this);
        for (p, a) in body.params.iter().zip(args) {
            env.insert(p, a);
        }
        for (i, stmt) in body.statements.iter().enumerate() {
            match stmt {
                Statement::Copy { dst, src } => {
                    let v = env[src.as_str()];
                    env.insert(dst, v);
                }
                Statement::LoadField { dst, base, field } => {
                    let b = env[base.as_str()];
                    let child = match self.heap[b].fields.get(field) {
                        Some(c) => *c,
                        None => {
                            let c = self.alloc(BTreeSet::new());
                            self.heap[b].fields.insert(field.clone(), c);
                            c
                        }
                    };
                    // taint on an object covers everything reachable from it
                    let inherited = self.heap[b].labels.clone();
                    self.heap[child].labels.extend(inherited);
                    env.insert(dst, child);
                }
                Statement::StoreField { base, field, src } => {
                    let (b, s) = (env[base.as_str()], env[src.as_str()]);
                    self.heap[b].fields.insert(field.clone(), s);
                }
                Statement::Invoke { dst, callee, args } => {
                    let argv: Vec<usize> = args.iter().map(|a| env[a.as_str()]).collect();
                    let result = if self.app.methods.contains_key(callee) {
                        self.call(callee, argv, depth + 1)
                    } else {
                        let site = StmtId::new(method, i);
                        let class = self.catalog.classify(callee);
                        let mut labels = BTreeSet::new();
                        for a in &argv {
                            labels.extend(self.deep_labels(*a));
                        }
                        if class.is_sink() {
                            for l in &labels {
                                self.flows.insert((l.clone(), site.clone()));
                            }
                        }
                        if class.is_source() {
                            labels.insert(site);
                        }
                        self.alloc(labels)
                    };
                    if let Some(d) = dst {
                        env.insert(d, result);
                    }
                }
                Statement::Return(v) => {
                    return match v {
                        Some(x) => env[x.as_str()],
                        None => self.alloc(BTreeSet::new()),
                    };
                }
            }
        }
        self.alloc(BTreeSet::new())
    }
}

/// All callback sequences of length `0..=max_len`.
fn schedules(loop_methods: &[String], max_len: usize) -> Vec<Vec<String>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for m in loop_methods {
                let mut t: Vec<String> = s.clone();
                t.push(m.clone());
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Enumerates every driver execution order (callback loop unrolled up to
/// `max_loop` iterations) and interprets the app concretely, collecting
/// (source site, sink site) pairs.
pub fn oracle_flows(
    app: &AppModel,
    catalog: &SourceSinkCatalog,
    max_loop: usize,
) -> BTreeSet<(StmtId, StmtId)> {
    let mut flows = BTreeSet::new();
    for c in &app.components {
        let named = |l: &Lifecycle| format!("{}.{}", c.name, l.name());
        let (prefix, suffix, mut loop_methods): (Vec<String>, Vec<String>, Vec<String>) =
            if c.kind == ComponentKind::Receiver {
                (vec![], vec![], c.lifecycle.iter().map(named).collect())
            } else {
                (
                    c.lifecycle.iter().filter(|l| l.is_prefix()).map(named).collect(),
                    c.lifecycle.iter().filter(|l| !l.is_prefix()).map(named).collect(),
                    vec![],
                )
            };
        loop_methods.extend(c.callbacks.iter().map(|cb| format!("{}.{}", c.name, cb)));
        for sched in schedules(&loop_methods, max_loop) {
            let mut run = Run {
                app,
                catalog,
                heap: Vec::new(),
                singletons: HashMap::new(),
                flows: &mut flows,
            };
            for m in prefix.iter().chain(&sched).chain(&suffix) {
                let args = app.methods[m]
                    .params
                    .iter()
                    .map(|_| run.alloc(BTreeSet::new()))
                    .collect();
                run.call(m, args, 0);
            }
        }
    }
    flows
}

// ---------------------------------------------------------------------------
// Random apps

pub const RANDOM_CATALOG: &str = "t.S1.get\tSOURCE\tUNIQUE_IDENTIFIER\n\
t.S2.get\tSOURCE\tLOCATION_INFORMATION\n\
t.K1.put\tSINK\tSMS_MMS\n\
t.K2.put\tSINK\tLOG\n\
t.D.swap\tSOURCE\tDATABASE_INFORMATION\n\
t.D.swap\tSINK\tFILE\n";

const APIS: [&str; 6] = ["t.S1.get", "t.S2.get", "t.K1.put", "t.K2.put", "t.D.swap", "t.P.op"];

/// A random field-free app with at most `max_stmts` statements and three
/// methods. Helpers are called from at most one site and never recursively.
pub fn random_app<R: Rng>(rng: &mut R, max_stmts: usize) -> AppModel {
    loop {
        let text = random_app_text(rng, max_stmts);
        let app = droidmark::ir::parse_app(&text)
            .unwrap_or_else(|e| panic!("generator produced invalid IR ({e}):\n{text}"));
        let stmts: usize = app.methods.values().map(|m| m.statements.len()).sum();
        if stmts <= max_stmts {
            return app;
        }
    }
}

fn random_app_text<R: Rng>(rng: &mut R, max_stmts: usize) -> String {
    let kind = *[ComponentKind::Activity, ComponentKind::Service, ComponentKind::Receiver]
        .choose(rng)
        .unwrap();
    let total_methods = rng.gen_range(1..=3);
    let driven_count = rng.gen_range(1..=total_methods);
    let helper_count = total_methods - driven_count;

    let comp = "r.C";
    let mut lifecycle: Vec<&str> = Vec::new();
    let mut callbacks: Vec<String> = Vec::new();
    let mut pool: Vec<&str> = match kind {
        ComponentKind::Receiver => vec!["onReceive"],
        _ => vec!["onCreate", "onStart", "onResume", "onPause", "onStop", "onDestroy"],
    };
    pool.shuffle(rng);
    for i in 0..driven_count {
        if let (Some(l), true) = (pool.get(i), rng.gen_bool(0.6) || i == 0) {
            if kind == ComponentKind::Receiver && !lifecycle.is_empty() {
                callbacks.push(format!("cb{i}"));
            } else {
                lifecycle.push(l);
            }
        } else {
            callbacks.push(format!("cb{i}"));
        }
    }

    struct M {
        name: String,
        params: usize,
    }
    let mut methods: Vec<M> = lifecycle
        .iter()
        .map(|l| M {
            name: format!("{comp}.{l}"),
            params: rng.gen_range(0..=1),
        })
        .chain(callbacks.iter().map(|c| M {
            name: format!("{comp}.{c}"),
            params: 0,
        }))
        .collect();
    let driven = methods.len();
    for h in 0..helper_count {
        methods.push(M {
            name: format!("r.H.h{h}"),
            params: rng.gen_range(0..=2),
        });
    }

    // Split the statement budget across methods.
    let budget = rng.gen_range(1..=max_stmts);
    let mut counts = vec![0usize; methods.len()];
    for _ in 0..budget {
        let i = rng.gen_range(0..methods.len());
        counts[i] += 1;
    }

    // Helper k may be called by a driven method or by helper j < k.
    let mut callers: Vec<Option<usize>> = vec![None; methods.len()];
    for (k, caller) in callers.iter_mut().enumerate().skip(driven) {
        if rng.gen_bool(0.85) {
            *caller = Some(rng.gen_range(0..k));
        }
    }

    let mut text = String::new();
    writeln!(text, "app rnd").unwrap();
    writeln!(text, "component {comp} kind={} {{", kind.as_str()).unwrap();
    for l in &lifecycle {
        writeln!(text, "  lifecycle {l}").unwrap();
    }
    for c in &callbacks {
        writeln!(text, "  callback {c}").unwrap();
    }
    writeln!(text, "}}").unwrap();

    for (mi, m) in methods.iter().enumerate() {
        let params: Vec<String> = (0..m.params).map(|p| format!("p{p}")).collect();
        writeln!(text, "method {}({}) {{", m.name, params.join(", ")).unwrap();
        let mut locals: Vec<String> = params.clone();
        let mut next_local = 0;
        let mut pending_calls: Vec<usize> = (0..methods.len())
            .filter(|k| callers[*k] == Some(mi))
            .collect();
        let n = counts[mi].max(pending_calls.len());
        for s in 0..n {
            let remaining = n - s;
            let fresh = |next_local: &mut usize| {
                *next_local += 1;
                format!("v{}", *next_local - 1)
            };
            let pick_args = |rng: &mut R, locals: &[String], k: usize| -> Option<Vec<String>> {
                (0..k)
                    .map(|_| locals.choose(rng).cloned())
                    .collect::<Option<Vec<_>>>()
            };
            let must_call = remaining <= pending_calls.len();
            let choice = if must_call { 99 } else { rng.gen_range(0..10) };
            let stmt = match choice {
                0..=2 => {
                    // API call with a result
                    let api = APIS.choose(rng).unwrap();
                    let argc = if api.ends_with("get") { 0 } else { rng.gen_range(0..=2) };
                    match pick_args(rng, &locals, argc) {
                        Some(args) => {
                            let d = if !locals.is_empty() && rng.gen_bool(0.3) {
                                locals.choose(rng).unwrap().clone()
                            } else {
                                fresh(&mut next_local)
                            };
                            let s = format!("{d} = call {api}({})", args.join(", "));
                            if !locals.contains(&d) {
                                locals.push(d);
                            }
                            s
                        }
                        None => {
                            let d = fresh(&mut next_local);
                            locals.push(d.clone());
                            format!("{d} = call t.S1.get()")
                        }
                    }
                }
                3..=4 => {
                    // sink without result
                    let api = ["t.K1.put", "t.K2.put", "t.D.swap", "t.P.op"].choose(rng).unwrap();
                    let argc = rng.gen_range(1..=2);
                    match pick_args(rng, &locals, argc) {
                        Some(args) => format!("call {api}({})", args.join(", ")),
                        None => "call t.P.op()".to_string(),
                    }
                }
                5..=6 if !locals.is_empty() => {
                    let src = locals.choose(rng).unwrap().clone();
                    let d = if rng.gen_bool(0.5) {
                        locals.choose(rng).unwrap().clone()
                    } else {
                        fresh(&mut next_local)
                    };
                    if !locals.contains(&d) {
                        locals.push(d.clone());
                    }
                    format!("{d} = {src}")
                }
                7 if s + 1 == n && !locals.is_empty() => {
                    format!("return {}", locals.choose(rng).unwrap())
                }
                _ if !pending_calls.is_empty() => {
                    let k = pending_calls.remove(0);
                    let callee = &methods[k];
                    let args = match pick_args(rng, &locals, callee.params) {
                        Some(a) => a,
                        None => {
                            // materialize enough locals first
                            let mut a = Vec::new();
                            for _ in 0..callee.params {
                                let d = fresh(&mut next_local);
                                writeln!(text, "  {d} = call t.P.op()").unwrap();
                                locals.push(d.clone());
                                a.push(d);
                            }
                            a
                        }
                    };
                    if rng.gen_bool(0.6) {
                        let d = fresh(&mut next_local);
                        locals.push(d.clone());
                        format!("{d} = call {}({})", callee.name, args.join(", "))
                    } else {
                        format!("call {}({})", callee.name, args.join(", "))
                    }
                }
                _ => {
                    let d = fresh(&mut next_local);
                    locals.push(d.clone());
                    format!("{d} = call t.S2.get()")
                }
            };
            writeln!(text, "  {stmt}").unwrap();
        }
        writeln!(text, "}}").unwrap();
    }
    text
}

// ---------------------------------------------------------------------------
// Bayesian network oracle

/// A network kept as a plain lookup table keyed by (variable, parent values).
#[derive(Debug, Clone)]
pub struct OracleNet {
    pub cards: Vec<usize>,
    pub parents: Vec<Vec<usize>>,
    pub table: HashMap<(usize, Vec<usize>), Vec<f64>>,
}

fn all_assignments(cards: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &c in cards {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..c).map(move |x| {
                    let mut p = prefix.clone();
                    p.push(x);
                    p
                })
            })
            .collect();
    }
    out
}

impl OracleNet {
    /// Random DAG over `n` variables consistent with a random order, each
    /// variable having at most two parents, with random CPT rows.
    pub fn random<R: Rng>(rng: &mut R, n: usize) -> Self {
        let cards: Vec<usize> = (0..n).map(|_| rng.gen_range(2..=3)).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut parents = vec![Vec::new(); n];
        for (pos, &v) in order.iter().enumerate() {
            let mut preds = order[..pos].to_vec();
            preds.shuffle(rng);
            parents[v] = preds.into_iter().take(rng.gen_range(0..=2)).collect();
        }
        let mut table = HashMap::new();
        for v in 0..n {
            let pcards: Vec<usize> = parents[v].iter().map(|p| cards[*p]).collect();
            for pv in all_assignments(&pcards) {
                let w: Vec<f64> = (0..cards[v]).map(|_| rng.gen_range(0.01..1.0)).collect();
                let s: f64 = w.iter().sum();
                table.insert((v, pv), w.into_iter().map(|x| x / s).collect());
            }
        }
        Self { cards, parents, table }
    }

    /// The same network in library form.
    pub fn to_network(&self, class: usize) -> BayesNetwork {
        let vars = self
            .cards
            .iter()
            .enumerate()
            .map(|(i, c)| Variable::new(format!("v{i}"), (0..*c).map(|x| x.to_string())))
            .collect();
        let edges: Vec<(usize, usize)> = self
            .parents
            .iter()
            .enumerate()
            .flat_map(|(c, ps)| ps.iter().map(move |p| (*p, c)))
            .collect();
        let dag = Dag::from_edges(self.cards.len(), &edges).unwrap();
        BayesNetwork::from_fn(vars, dag, class, |v, pv| self.table[&(v, pv.to_vec())].clone()).unwrap()
    }

    pub fn theta(&self, v: usize, assignment: &[usize]) -> f64 {
        let pv: Vec<usize> = self.parents[v].iter().map(|p| assignment[*p]).collect();
        self.table[&(v, pv)][assignment[v]]
    }

    pub fn joint(&self, assignment: &[usize]) -> f64 {
        (0..self.cards.len()).map(|v| self.theta(v, assignment)).product()
    }

    pub fn assignments(&self) -> Vec<Vec<usize>> {
        all_assignments(&self.cards)
    }

    /// P(class | every other variable) by summing the full joint table.
    pub fn posterior(&self, class: usize, evidence: &[usize]) -> Vec<f64> {
        let mut mass = vec![0.0; self.cards[class]];
        for a in self.assignments() {
            if (0..a.len()).all(|v| v == class || a[v] == evidence[v]) {
                mass[a[class]] += self.joint(&a);
            }
        }
        let total: f64 = mass.iter().sum();
        mass.into_iter().map(|m| m / total).collect()
    }

    /// Ancestral sampling.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<usize> {
        let n = self.cards.len();
        let mut a = vec![usize::MAX; n];
        while a.contains(&usize::MAX) {
            for v in 0..n {
                if a[v] == usize::MAX && self.parents[v].iter().all(|p| a[*p] != usize::MAX) {
                    let pv: Vec<usize> = self.parents[v].iter().map(|p| a[*p]).collect();
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    let row = &self.table[&(v, pv)];
                    a[v] = row.len() - 1;
                    for (x, p) in row.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            a[v] = x;
                            break;
                        }
                    }
                }
            }
        }
        a
    }
}
