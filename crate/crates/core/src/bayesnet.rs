//! Discrete Bayesian networks over nominal datasets.
//!
//! A network is a DAG plus one conditional probability table per variable.
//! The joint distribution factorizes as the product of each variable's CPT
//! entry given its parents. Structure is learned with K2 under a fixed
//! variable ordering; parameters are smoothed frequency estimates.
//!
//! CPT rows are indexed by parent configuration in mixed radix over the
//! parents in the order they were added, the last parent varying fastest.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::arff::{Dataset, Value};

/// Prior used by the Bayes score and by default parameter smoothing.
pub const DEFAULT_ALPHA: f64 = 0.5;
/// Equivalent sample size of the BDeu score.
pub const BDEU_ESS: f64 = 1.0;
pub const DEFAULT_MAX_PARENTS: usize = 2;

const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum BnError {
    #[error("dataset has no instances")]
    EmptyData,
    #[error("row {row}: attribute `{attr}` is unknown")]
    UnknownValuePresent { row: usize, attr: String },
    #[error("attribute `{attr}` has no known value")]
    UnknownAttributeValue { attr: String },
    #[error("assignment has {found} values, network has {expected} variables")]
    IncompleteAssignment { expected: usize, found: usize },
    #[error("edge {parent} -> {child} would close a cycle")]
    Cycle { parent: String, child: String },
    #[error("{0}")]
    InvalidNetwork(String),
    #[error("ordering must be a permutation of 0..{0}")]
    InvalidOrdering(usize),
    #[error("smoothing alpha must be finite and non-negative, got {0}")]
    InvalidAlpha(f64),
    #[error("no attribute named `{0}`")]
    UnknownAttribute(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub values: Vec<String>,
}

impl Variable {
    pub fn new<I, S>(name: impl Into<String>, values: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            name: name.into(),
            values: values.into_iter().map(Into::into).collect(),
        }
    }

    pub fn cardinality(&self) -> usize {
        self.values.len()
    }
}

pub fn variables_of(data: &Dataset) -> Vec<Variable> {
    data.attributes
        .iter()
        .map(|a| Variable::new(a.name.clone(), a.values.clone()))
        .collect()
}

/// Parent lists per node. Always acyclic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    parents: Vec<Vec<usize>>,
}

impl Dag {
    pub fn empty(n: usize) -> Self {
        Self {
            parents: vec![Vec::new(); n],
        }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, BnError> {
        let mut dag = Self::empty(n);
        for &(p, c) in edges {
            dag.add_edge(p, c)?;
        }
        Ok(dag)
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn parents(&self, node: usize) -> &[usize] {
        &self.parents[node]
    }

    /// Edges as (parent, child), grouped by child in node order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.parents
            .iter()
            .enumerate()
            .flat_map(|(c, ps)| ps.iter().map(move |p| (*p, c)))
            .collect()
    }

    /// Adds `parent -> child`. Existing edges are ignored.
    pub fn add_edge(&mut self, parent: usize, child: usize) -> Result<(), BnError> {
        let n = self.len();
        if parent >= n || child >= n {
            return Err(BnError::InvalidNetwork(format!(
                "edge {parent} -> {child} outside {n} nodes"
            )));
        }
        if self.parents[child].contains(&parent) {
            return Ok(());
        }
        if parent == child || self.reaches(child, parent) {
            return Err(BnError::Cycle {
                parent: parent.to_string(),
                child: child.to_string(),
            });
        }
        self.parents[child].push(parent);
        Ok(())
    }

    /// Whether `to` is reachable from `from` along edges.
    fn reaches(&self, from: usize, to: usize) -> bool {
        let mut stack = vec![to];
        let mut seen = vec![false; self.len()];
        // walk parents backwards from `to`
        while let Some(n) = stack.pop() {
            if n == from {
                return true;
            }
            if !std::mem::replace(&mut seen[n], true) {
                stack.extend(&self.parents[n]);
            }
        }
        false
    }

    pub fn topological_order(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.len());
        let mut placed = vec![false; self.len()];
        while order.len() < self.len() {
            for n in 0..self.len() {
                if !placed[n] && self.parents[n].iter().all(|p| placed[*p]) {
                    placed[n] = true;
                    order.push(n);
                }
            }
        }
        order
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub bayes: f64,
    pub bdeu: f64,
    pub mdl: f64,
    pub entropy: f64,
    pub aic: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub label: usize,
    pub distribution: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BayesNetwork {
    variables: Vec<Variable>,
    dag: Dag,
    /// Per variable: one row per parent configuration, one entry per value.
    cpts: Vec<Vec<Vec<f64>>>,
    class_index: usize,
}

impl BayesNetwork {
    pub fn new(
        variables: Vec<Variable>,
        dag: Dag,
        cpts: Vec<Vec<Vec<f64>>>,
        class_index: usize,
    ) -> Result<Self, BnError> {
        let net = Self {
            variables,
            dag,
            cpts,
            class_index,
        };
        net.validate()?;
        Ok(net)
    }

    /// Builds CPTs by asking `row(var, parent_values)` for each row.
    pub fn from_fn<F>(variables: Vec<Variable>, dag: Dag, class_index: usize, mut row: F) -> Result<Self, BnError>
    where
        F: FnMut(usize, &[usize]) -> Vec<f64>,
    {
        let cards: Vec<usize> = variables.iter().map(Variable::cardinality).collect();
        let cpts = (0..variables.len())
            .map(|v| {
                let ps = dag.parents(v);
                (0..config_count(&cards, ps))
                    .map(|cfg| row(v, &decode_config(&cards, ps, cfg)))
                    .collect()
            })
            .collect();
        Self::new(variables, dag, cpts, class_index)
    }

    fn validate(&self) -> Result<(), BnError> {
        let bad = |m: String| Err(BnError::InvalidNetwork(m));
        let n = self.variables.len();
        if self.dag.len() != n || self.cpts.len() != n {
            return bad(format!("{n} variables but {} nodes and {} CPTs", self.dag.len(), self.cpts.len()));
        }
        if self.class_index >= n {
            return bad(format!("class index {} out of range", self.class_index));
        }
        let cards = self.cardinalities();
        for (v, var) in self.variables.iter().enumerate() {
            if var.values.is_empty() {
                return bad(format!("variable `{}` has no values", var.name));
            }
            let q = config_count(&cards, self.dag.parents(v));
            let cpt = &self.cpts[v];
            if cpt.len() != q {
                return bad(format!("`{}`: {} CPT rows, expected {q}", var.name, cpt.len()));
            }
            for (cfg, r) in cpt.iter().enumerate() {
                if r.len() != cards[v] {
                    return bad(format!("`{}` row {cfg}: {} entries, expected {}", var.name, r.len(), cards[v]));
                }
                if r.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return bad(format!("`{}` row {cfg}: entry outside [0,1]", var.name));
                }
                let s: f64 = r.iter().sum();
                if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return bad(format!("`{}` row {cfg} sums to {s}", var.name));
                }
            }
        }
        Ok(())
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn class_index(&self) -> usize {
        self.class_index
    }

    pub fn set_class_index(&mut self, class_index: usize) -> Result<(), BnError> {
        if class_index >= self.variables.len() {
            return Err(BnError::InvalidNetwork(format!("class index {class_index} out of range")));
        }
        self.class_index = class_index;
        Ok(())
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.variables.iter().map(Variable::cardinality).collect()
    }

    /// θ(value | parents as found in `assignment`).
    pub fn conditional(&self, var: usize, assignment: &[usize]) -> f64 {
        let cfg = encode_config(&self.cardinalities(), self.dag.parents(var), assignment);
        self.cpts[var][cfg][assignment[var]]
    }

    pub fn cpt(&self, var: usize) -> &[Vec<f64>] {
        &self.cpts[var]
    }

    /// Number of free parameters, Σ (r_i − 1)·q_i.
    pub fn parameter_count(&self) -> usize {
        let cards = self.cardinalities();
        (0..cards.len())
            .map(|v| (cards[v] - 1) * config_count(&cards, self.dag.parents(v)))
            .sum()
    }

    pub fn joint_probability(&self, assignment: &[usize]) -> Result<f64, BnError> {
        if assignment.len() != self.variables.len() {
            return Err(BnError::IncompleteAssignment {
                expected: self.variables.len(),
                found: assignment.len(),
            });
        }
        for (v, &x) in assignment.iter().enumerate() {
            if x >= self.variables[v].cardinality() {
                return Err(BnError::UnknownAttributeValue {
                    attr: self.variables[v].name.clone(),
                });
            }
        }
        Ok((0..assignment.len()).map(|v| self.conditional(v, assignment)).product())
    }

    /// Posterior over class values for a dataset row. The class cell is
    /// ignored; every other cell must be known.
    pub fn classify(&self, row: &[Value]) -> Result<Posterior, BnError> {
        if row.len() != self.variables.len() {
            return Err(BnError::IncompleteAssignment {
                expected: self.variables.len(),
                found: row.len(),
            });
        }
        let mut assignment = Vec::with_capacity(row.len());
        for (v, cell) in row.iter().enumerate() {
            match cell.index() {
                _ if v == self.class_index => assignment.push(0),
                Some(x) if x < self.variables[v].cardinality() => assignment.push(x),
                _ => {
                    return Err(BnError::UnknownAttributeValue {
                        attr: self.variables[v].name.clone(),
                    })
                }
            }
        }
        let c = self.class_index;
        let mut dist: Vec<f64> = (0..self.variables[c].cardinality())
            .map(|k| {
                assignment[c] = k;
                self.joint_probability(&assignment).expect("assignment checked")
            })
            .collect();
        let total: f64 = dist.iter().sum();
        if total > 0.0 {
            dist.iter_mut().for_each(|p| *p /= total);
        } else {
            let u = 1.0 / dist.len() as f64;
            dist.iter_mut().for_each(|p| *p = u);
        }
        let mut label = 0;
        for (k, p) in dist.iter().enumerate() {
            if *p > dist[label] {
                label = k;
            }
        }
        Ok(Posterior {
            label,
            distribution: dist,
        })
    }

    /// Lines of the form `Name(r): Parent1 Parent2`.
    pub fn structure_summary(&self) -> String {
        let mut out = String::new();
        for (v, var) in self.variables.iter().enumerate() {
            out.push_str(&format!("{}({}):", var.name, var.cardinality()));
            for p in self.dag.parents(v) {
                out.push(' ');
                out.push_str(&self.variables[*p].name);
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }
}

#[derive(Serialize, Deserialize)]
struct NetworkJson {
    variables: Vec<Variable>,
    edges: Vec<(String, String)>,
    cpts: BTreeMap<String, Vec<Vec<f64>>>,
    class_index: usize,
}

impl Serialize for BayesNetwork {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let name = |i: usize| self.variables[i].name.clone();
        NetworkJson {
            variables: self.variables.clone(),
            edges: self.dag.edges().into_iter().map(|(p, c)| (name(p), name(c))).collect(),
            cpts: (0..self.variables.len()).map(|v| (name(v), self.cpts[v].clone())).collect(),
            class_index: self.class_index,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BayesNetwork {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let j = NetworkJson::deserialize(d)?;
        let index = |n: &str| {
            j.variables
                .iter()
                .position(|v| v.name == n)
                .ok_or_else(|| D::Error::custom(format!("unknown variable `{n}`")))
        };
        let mut dag = Dag::empty(j.variables.len());
        for (p, c) in &j.edges {
            dag.add_edge(index(p)?, index(c)?).map_err(D::Error::custom)?;
        }
        let cpts = j
            .variables
            .iter()
            .map(|v| {
                j.cpts
                    .get(&v.name)
                    .cloned()
                    .ok_or_else(|| D::Error::custom(format!("no CPT for `{}`", v.name)))
            })
            .collect::<Result<_, _>>()?;
        BayesNetwork::new(j.variables, dag, cpts, j.class_index).map_err(D::Error::custom)
    }
}

fn config_count(cards: &[usize], parents: &[usize]) -> usize {
    parents.iter().map(|p| cards[*p]).product()
}

fn encode_config(cards: &[usize], parents: &[usize], assignment: &[usize]) -> usize {
    parents.iter().fold(0, |acc, p| acc * cards[*p] + assignment[*p])
}

fn decode_config(cards: &[usize], parents: &[usize], mut cfg: usize) -> Vec<usize> {
    let mut out = vec![0; parents.len()];
    for (i, p) in parents.iter().enumerate().rev() {
        out[i] = cfg % cards[*p];
        cfg /= cards[*p];
    }
    out
}

/// Rows as value indices. Fails on the first unknown cell.
fn complete_rows(data: &Dataset) -> Result<Vec<Vec<usize>>, BnError> {
    if data.rows.is_empty() {
        return Err(BnError::EmptyData);
    }
    data.rows
        .iter()
        .enumerate()
        .map(|(r, row)| {
            row.iter()
                .enumerate()
                .map(|(a, v)| {
                    v.index().ok_or_else(|| BnError::UnknownValuePresent {
                        row: r + 1,
                        attr: data.attributes[a].name.clone(),
                    })
                })
                .collect()
        })
        .collect()
}

/// N_{x,π}: q rows of r counts.
fn family_counts(rows: &[Vec<usize>], cards: &[usize], var: usize, parents: &[usize]) -> Vec<Vec<usize>> {
    let mut counts = vec![vec![0; cards[var]]; config_count(cards, parents)];
    for row in rows {
        counts[encode_config(cards, parents, row)][row[var]] += 1;
    }
    counts
}

/// Dirichlet marginal likelihood of one family with per-cell prior `alpha`.
fn family_dirichlet(counts: &[Vec<usize>], alpha: f64) -> f64 {
    let mut s = 0.0;
    for row in counts {
        let r = row.len() as f64;
        let n: usize = row.iter().sum();
        s += ln_gamma(r * alpha) - ln_gamma(n as f64 + r * alpha);
        for &c in row {
            s += ln_gamma(c as f64 + alpha) - ln_gamma(alpha);
        }
    }
    s
}

fn family_entropy(counts: &[Vec<usize>]) -> f64 {
    let mut s = 0.0;
    for row in counts {
        let n: usize = row.iter().sum();
        for &c in row.iter().filter(|c| **c > 0) {
            s += c as f64 * (c as f64 / n as f64).ln();
        }
    }
    s
}

fn check_alpha(alpha: f64) -> Result<(), BnError> {
    if alpha.is_finite() && alpha >= 0.0 {
        Ok(())
    } else {
        Err(BnError::InvalidAlpha(alpha))
    }
}

/// Smoothed estimates θ = (N_{x,π} + α) / (N_π + α·r). A parent
/// configuration with no data and α = 0 gets the uniform row. The class is
/// the attribute named `Class`, else the last one.
pub fn fit_parameters(dag: &Dag, data: &Dataset, alpha: f64) -> Result<BayesNetwork, BnError> {
    check_alpha(alpha)?;
    let rows = complete_rows(data)?;
    let variables = variables_of(data);
    if dag.len() != variables.len() {
        return Err(BnError::InvalidNetwork(format!(
            "structure has {} nodes, data has {} attributes",
            dag.len(),
            variables.len()
        )));
    }
    let cards: Vec<usize> = variables.iter().map(Variable::cardinality).collect();
    let cpts = (0..variables.len())
        .map(|v| {
            family_counts(&rows, &cards, v, dag.parents(v))
                .into_iter()
                .map(|row| {
                    let r = row.len() as f64;
                    let n: usize = row.iter().sum();
                    let denom = n as f64 + alpha * r;
                    if denom == 0.0 {
                        vec![1.0 / r; row.len()]
                    } else {
                        row.iter().map(|c| (*c as f64 + alpha) / denom).collect()
                    }
                })
                .collect()
        })
        .collect();
    let class_index = data.default_class_index().unwrap_or(0);
    BayesNetwork::new(variables, dag.clone(), cpts, class_index)
}

/// Greedy K2. Each variable takes parents only from its predecessors in
/// `ordering`, adding the one that most improves the Bayes score until
/// nothing improves or `max_parents` is reached. Ties go to the lowest
/// variable index.
pub fn learn_structure_k2(data: &Dataset, ordering: &[usize], max_parents: usize) -> Result<Dag, BnError> {
    let n = data.attributes.len();
    let mut sorted = ordering.to_vec();
    sorted.sort_unstable();
    if sorted != (0..n).collect::<Vec<_>>() {
        return Err(BnError::InvalidOrdering(n));
    }
    let rows = complete_rows(data)?;
    let cards: Vec<usize> = data.attributes.iter().map(|a| a.cardinality()).collect();
    let score = |v: usize, ps: &[usize]| family_dirichlet(&family_counts(&rows, &cards, v, ps), DEFAULT_ALPHA);
    let mut dag = Dag::empty(n);
    for (pos, &v) in ordering.iter().enumerate() {
        let mut candidates = ordering[..pos].to_vec();
        candidates.sort_unstable();
        let mut parents: Vec<usize> = Vec::new();
        let mut current = score(v, &parents);
        while parents.len() < max_parents {
            let mut best: Option<(usize, f64)> = None;
            for &z in candidates.iter().filter(|z| !parents.contains(z)) {
                let mut trial = parents.clone();
                trial.push(z);
                let s = score(v, &trial);
                if !matches!(best, Some((_, b)) if s <= b) {
                    best = Some((z, s));
                }
            }
            match best {
                Some((z, s)) if s > current => {
                    parents.push(z);
                    current = s;
                }
                _ => break,
            }
        }
        for p in parents {
            dag.add_edge(p, v)?;
        }
    }
    Ok(dag)
}

/// The five log scores of `net`'s structure against `data`, natural log.
pub fn score_network(net: &BayesNetwork, data: &Dataset) -> Result<ScoreReport, BnError> {
    let rows = complete_rows(data)?;
    let cards = net.cardinalities();
    if cards.len() != data.attributes.len() {
        return Err(BnError::InvalidNetwork("network and data disagree on attributes".into()));
    }
    let (mut entropy, mut bayes, mut bdeu) = (0.0, 0.0, 0.0);
    for v in 0..cards.len() {
        let parents = net.dag().parents(v);
        let counts = family_counts(&rows, &cards, v, parents);
        let q = counts.len() as f64;
        entropy += family_entropy(&counts);
        bayes += family_dirichlet(&counts, DEFAULT_ALPHA);
        bdeu += family_dirichlet(&counts, BDEU_ESS / (cards[v] as f64 * q));
    }
    let k = net.parameter_count() as f64;
    let n = rows.len() as f64;
    Ok(ScoreReport {
        bayes,
        bdeu,
        mdl: entropy - k / 2.0 * n.ln(),
        entropy,
        aic: entropy - k,
    })
}

/// Structure and parameter learning settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub alpha: f64,
    pub max_parents: usize,
    /// Class attribute name; `Class` or the last attribute when unset.
    pub class_attribute: Option<String>,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            max_parents: DEFAULT_MAX_PARENTS,
            class_attribute: None,
        }
    }
}

/// K2 in dataset attribute order, then parameter fitting.
pub fn train(data: &Dataset, config: &LearnerConfig) -> Result<BayesNetwork, BnError> {
    check_alpha(config.alpha)?;
    let ordering: Vec<usize> = (0..data.attributes.len()).collect();
    let dag = learn_structure_k2(data, &ordering, config.max_parents)?;
    let mut net = fit_parameters(&dag, data, config.alpha)?;
    if let Some(name) = &config.class_attribute {
        let c = data
            .attribute_index(name)
            .ok_or_else(|| BnError::UnknownAttribute(name.clone()))?;
        net.set_class_index(c)?;
    }
    Ok(net)
}

impl fmt::Display for ScoreReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "LogScore Bayes: {}", self.bayes)?;
        writeln!(f, "LogScore BDeu: {}", self.bdeu)?;
        writeln!(f, "LogScore MDL: {}", self.mdl)?;
        writeln!(f, "LogScore ENTROPY: {}", self.entropy)?;
        writeln!(f, "LogScore AIC: {}", self.aic)
    }
}
