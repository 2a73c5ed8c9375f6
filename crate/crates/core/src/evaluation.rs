//! Stratified cross-validation and classifier metrics.
//!
//! Metric definitions follow the WEKA conventions: per-class rates from a
//! one-vs-rest reading of the confusion matrix, support-weighted averages,
//! and probabilistic errors measured over 0/1 class indicators relative to
//! a prior-only baseline. A 0/0 cell is reported as 0 and flagged.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arff::Dataset;
use crate::bayesnet::{train, BnError, LearnerConfig};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("cannot make {k} folds from {n} instances")]
    TooFewInstances { k: usize, n: usize },
    #[error("row {0} has no class label")]
    UnlabeledInstance(usize),
    #[error("dataset has no class attribute")]
    NoClassAttribute,
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("confusion matrix must be square with one row per class")]
    MalformedMatrix,
    #[error("{truths} truths but {predictions} predictions")]
    LengthMismatch { truths: usize, predictions: usize },
    #[error("all instances belong to one class")]
    DegenerateClass,
    #[error(transparent)]
    Learner(#[from] BnError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub class_names: Vec<String>,
    /// Rows are actual classes, columns predicted.
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(class_names: Vec<String>) -> Self {
        let c = class_names.len();
        Self {
            class_names,
            counts: vec![vec![0; c]; c],
        }
    }

    pub fn new(class_names: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self, EvalError> {
        let c = class_names.len();
        if counts.len() != c || counts.iter().any(|r| r.len() != c) {
            return Err(EvalError::MalformedMatrix);
        }
        Ok(Self { class_names, counts })
    }

    /// Classes named `0`, `1`, ... as in an unnamed matrix.
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self, EvalError> {
        let names = (0..counts.len()).map(|i| i.to_string()).collect();
        Self::new(names, counts)
    }

    pub fn add(&mut self, actual: usize, predicted: usize) {
        self.counts[actual][predicted] += 1;
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let letters: Vec<String> = (0..self.classes()).map(column_letter).collect();
        let width = self
            .counts
            .iter()
            .flatten()
            .map(|c| c.to_string().len())
            .chain(letters.iter().map(String::len))
            .max()
            .unwrap_or(1);
        let mut header = String::new();
        for l in &letters {
            let _ = write!(header, " {l:>width$}");
        }
        writeln!(f, "{header}   <-- classified as")?;
        for (i, row) in self.counts.iter().enumerate() {
            let mut line = String::new();
            for c in row {
                let _ = write!(line, " {c:>width$}");
            }
            writeln!(f, "{line} |   {} = {}", letters[i], self.class_names[i])?;
        }
        Ok(())
    }
}

fn column_letter(mut i: usize) -> String {
    let mut s = String::new();
    loop {
        s.insert(0, (b'a' + (i % 26) as u8) as char);
        if i < 26 {
            return s;
        }
        i = i / 26 - 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub tp_rate: f64,
    pub fp_rate: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub mcc: f64,
    pub roc_area: Option<f64>,
    pub prc_area: Option<f64>,
    /// Names of cells that hit a zero denominator.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub undefined: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub total: u64,
    pub correct: u64,
    pub accuracy: f64,
    pub kappa: f64,
    pub per_class: Vec<ClassMetrics>,
    pub weighted: ClassMetrics,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub undefined: BTreeSet<String>,
}

fn ratio(num: f64, den: f64, name: &str, flags: &mut BTreeSet<String>) -> f64 {
    if den == 0.0 {
        flags.insert(name.to_string());
        0.0
    } else {
        num / den
    }
}

pub fn metrics_from_confusion(cm: &ConfusionMatrix) -> Result<Metrics, EvalError> {
    let total = cm.total();
    if total == 0 || cm.classes() == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let n = total as f64;
    let per_class: Vec<ClassMetrics> = (0..cm.classes())
        .map(|c| {
            let tp = cm.counts[c][c] as f64;
            let fn_ = cm.support(c) as f64 - tp;
            let fp = cm.predicted(c) as f64 - tp;
            let tn = n - tp - fn_ - fp;
            let mut flags = BTreeSet::new();
            let tpr = ratio(tp, tp + fn_, "tp_rate", &mut flags);
            let fpr = ratio(fp, fp + tn, "fp_rate", &mut flags);
            let precision = ratio(tp, tp + fp, "precision", &mut flags);
            let f = ratio(2.0 * precision * tpr, precision + tpr, "f_measure", &mut flags);
            let mcc_den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
            let mcc = ratio(tp * tn - fp * fn_, mcc_den.sqrt(), "mcc", &mut flags);
            if flags.contains("tp_rate") {
                flags.insert("recall".into());
            }
            ClassMetrics {
                tp_rate: tpr,
                fp_rate: fpr,
                precision,
                recall: tpr,
                f_measure: f,
                mcc,
                roc_area: None,
                prc_area: None,
                undefined: flags,
            }
        })
        .collect();
    let correct = cm.correct();
    let p_o = correct as f64 / n;
    let p_e: f64 = (0..cm.classes())
        .map(|c| cm.support(c) as f64 * cm.predicted(c) as f64)
        .sum::<f64>()
        / (n * n);
    let mut undefined = BTreeSet::new();
    let kappa = ratio(p_o - p_e, 1.0 - p_e, "kappa", &mut undefined);
    let supports: Vec<f64> = (0..cm.classes()).map(|c| cm.support(c) as f64).collect();
    let weighted = weighted_average(&per_class, &supports);
    Ok(Metrics {
        total,
        correct,
        accuracy: p_o,
        kappa,
        per_class,
        weighted,
        undefined,
    })
}

fn weighted_average(per_class: &[ClassMetrics], weights: &[f64]) -> ClassMetrics {
    let w: f64 = weights.iter().sum();
    let avg = |get: &dyn Fn(&ClassMetrics) -> f64| -> f64 {
        per_class.iter().zip(weights).map(|(m, k)| get(m) * k).sum::<f64>() / w
    };
    let avg_opt = |get: &dyn Fn(&ClassMetrics) -> Option<f64>| -> Option<f64> {
        let mut s = 0.0;
        let mut seen = 0.0;
        for (m, k) in per_class.iter().zip(weights) {
            if let Some(v) = get(m) {
                s += v * k;
                seen += k;
            }
        }
        (seen > 0.0).then(|| s / seen)
    };
    ClassMetrics {
        tp_rate: avg(&|m| m.tp_rate),
        fp_rate: avg(&|m| m.fp_rate),
        precision: avg(&|m| m.precision),
        recall: avg(&|m| m.recall),
        f_measure: avg(&|m| m.f_measure),
        mcc: avg(&|m| m.mcc),
        roc_area: avg_opt(&|m| m.roc_area),
        prc_area: avg_opt(&|m| m.prc_area),
        undefined: BTreeSet::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub mae: f64,
    pub rmse: f64,
    /// Percent.
    pub rae: f64,
    /// Percent.
    pub rrse: f64,
}

/// Running sums for [`ErrorMetrics`], one baseline distribution per instance.
#[derive(Debug, Clone, Default)]
pub struct ErrorAccumulator {
    count: usize,
    abs: f64,
    sq: f64,
    prior_abs: f64,
    prior_sq: f64,
}

impl ErrorAccumulator {
    pub fn add(&mut self, truth: usize, probs: &[f64], baseline: &[f64]) {
        let c = probs.len() as f64;
        let (a, s) = indicator_errors(truth, probs);
        let (pa, ps) = indicator_errors(truth, baseline);
        self.count += 1;
        self.abs += a / c;
        self.sq += s / c;
        self.prior_abs += pa / c;
        self.prior_sq += ps / c;
    }

    pub fn finish(&self) -> ErrorMetrics {
        let n = self.count.max(1) as f64;
        let rel = |num: f64, den: f64| if den == 0.0 { 0.0 } else { num / den };
        ErrorMetrics {
            mae: self.abs / n,
            rmse: (self.sq / n).sqrt(),
            rae: 100.0 * rel(self.abs, self.prior_abs),
            rrse: 100.0 * rel(self.sq, self.prior_sq).sqrt(),
        }
    }
}

fn indicator_errors(truth: usize, probs: &[f64]) -> (f64, f64) {
    probs.iter().enumerate().fold((0.0, 0.0), |(a, s), (k, p)| {
        let d = p - if k == truth { 1.0 } else { 0.0 };
        (a + d.abs(), s + d * d)
    })
}

/// MAE, RMSE, RAE and RRSE of `probs` against `truths`, with `prior` as the
/// baseline prediction for every instance.
pub fn probabilistic_errors(truths: &[usize], probs: &[Vec<f64>], prior: &[f64]) -> Result<ErrorMetrics, EvalError> {
    if truths.len() != probs.len() {
        return Err(EvalError::LengthMismatch {
            truths: truths.len(),
            predictions: probs.len(),
        });
    }
    let mut acc = ErrorAccumulator::default();
    for (t, p) in truths.iter().zip(probs) {
        acc.add(*t, p, prior);
    }
    Ok(acc.finish())
}

/// Area under the ROC curve (Mann-Whitney, ties count one half) and under
/// the precision-recall curve (trapezoids between successive thresholds,
/// starting from recall 0 at the first threshold's precision).
pub fn roc_prc_area(truths: &[bool], scores: &[f64]) -> Result<(f64, f64), EvalError> {
    if truths.len() != scores.len() {
        return Err(EvalError::LengthMismatch {
            truths: truths.len(),
            predictions: scores.len(),
        });
    }
    let pos = truths.iter().filter(|t| **t).count();
    let neg = truths.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::DegenerateClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]));

    let mut wins = 0.0;
    let mut neg_below = neg as f64;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut points: Vec<(f64, f64)> = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (mut gp, mut gn) = (0usize, 0usize);
        while i < order.len() && scores[order[i]] == s {
            if truths[order[i]] {
                gp += 1;
            } else {
                gn += 1;
            }
            i += 1;
        }
        neg_below -= gn as f64;
        wins += gp as f64 * (neg_below + 0.5 * gn as f64);
        tp += gp;
        fp += gn;
        let precision = tp as f64 / (tp + fp) as f64;
        if points.is_empty() {
            points.push((0.0, precision));
        }
        points.push((tp as f64 / pos as f64, precision));
    }
    let roc = wins / (pos as f64 * neg as f64);
    let prc = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum();
    Ok((roc, prc))
}

fn class_labels(ds: &Dataset, class: usize) -> Result<Vec<usize>, EvalError> {
    ds.rows
        .iter()
        .enumerate()
        .map(|(i, r)| r[class].index().ok_or(EvalError::UnlabeledInstance(i + 1)))
        .collect()
}

fn class_index(ds: &Dataset, config: &LearnerConfig) -> Result<usize, EvalError> {
    match &config.class_attribute {
        Some(name) => ds
            .attribute_index(name)
            .ok_or_else(|| EvalError::Learner(BnError::UnknownAttribute(name.clone()))),
        None => ds.default_class_index().ok_or(EvalError::NoClassAttribute),
    }
}

/// `k` disjoint, ascending index sets covering every row. Rows are shuffled
/// with `seed`, grouped by class, then dealt round-robin, so fold sizes and
/// per-class counts each differ by at most one.
pub fn stratified_folds(ds: &Dataset, class: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>, EvalError> {
    let n = ds.rows.len();
    if k == 0 || k > n {
        return Err(EvalError::TooFewInstances { k, n });
    }
    let labels = class_labels(ds, class)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.sort_by_key(|i| labels[*i]);
    let mut folds = vec![Vec::new(); k];
    for (j, i) in order.into_iter().enumerate() {
        folds[j % k].push(i);
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub row: usize,
    pub fold: usize,
    pub actual: usize,
    pub predicted: usize,
    pub distribution: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub relation: String,
    pub folds: usize,
    pub seed: u64,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
    pub errors: ErrorMetrics,
    pub predictions: Vec<Prediction>,
}

/// Trains on all but one fold and predicts it, for each fold in turn.
/// The baseline for relative errors is each training split's class
/// frequencies with one added to every count.
pub fn cross_validate(ds: &Dataset, k: usize, seed: u64, config: &LearnerConfig) -> Result<EvaluationReport, EvalError> {
    if ds.rows.is_empty() {
        return Err(BnError::EmptyData.into());
    }
    let class = class_index(ds, config)?;
    let labels = class_labels(ds, class)?;
    let folds = stratified_folds(ds, class, k, seed)?;
    let class_names = ds.attributes[class].values.clone();
    let c = class_names.len();
    let mut config = config.clone();
    config.class_attribute = Some(ds.attributes[class].name.clone());

    let mut confusion = ConfusionMatrix::zeros(class_names);
    let mut errors = ErrorAccumulator::default();
    let mut predictions = Vec::with_capacity(ds.rows.len());
    let mut in_test = vec![usize::MAX; ds.rows.len()];
    for (f, fold) in folds.iter().enumerate() {
        fold.iter().for_each(|i| in_test[*i] = f);
    }
    for (f, fold) in folds.iter().enumerate() {
        let train_rows: Vec<usize> = (0..ds.rows.len()).filter(|i| in_test[*i] != f).collect();
        if train_rows.is_empty() {
            return Err(BnError::EmptyData.into());
        }
        let net = train(&ds.subset(&train_rows), &config)?;
        let mut prior = vec![1.0; c];
        train_rows.iter().for_each(|i| prior[labels[*i]] += 1.0);
        let sum: f64 = prior.iter().sum();
        prior.iter_mut().for_each(|p| *p /= sum);
        for &i in fold {
            let post = net.classify(&ds.rows[i])?;
            confusion.add(labels[i], post.label);
            errors.add(labels[i], &post.distribution, &prior);
            predictions.push(Prediction {
                row: i,
                fold: f,
                actual: labels[i],
                predicted: post.label,
                distribution: post.distribution,
            });
        }
    }
    predictions.sort_by_key(|p| p.row);

    let mut metrics = metrics_from_confusion(&confusion)?;
    for (cls, m) in metrics.per_class.iter_mut().enumerate() {
        let truths: Vec<bool> = predictions.iter().map(|p| p.actual == cls).collect();
        let scores: Vec<f64> = predictions.iter().map(|p| p.distribution[cls]).collect();
        match roc_prc_area(&truths, &scores) {
            Ok((roc, prc)) => {
                m.roc_area = Some(roc);
                m.prc_area = Some(prc);
            }
            Err(_) => {
                m.undefined.insert("roc_area".into());
                m.undefined.insert("prc_area".into());
            }
        }
    }
    let supports: Vec<f64> = (0..c).map(|i| confusion.support(i) as f64).collect();
    metrics.weighted = weighted_average(&metrics.per_class, &supports);

    Ok(EvaluationReport {
        relation: ds.relation.clone(),
        folds: k,
        seed,
        confusion,
        metrics,
        errors: errors.finish(),
        predictions,
    })
}

/// Three decimals, halves rounded away from zero.
fn cell(v: f64) -> String {
    format!("{:.3}", (v * 1000.0).round() / 1000.0)
}

fn opt_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "?".to_string(), cell)
}

impl EvaluationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let m = &self.metrics;
        let n = m.total as f64;
        let wrong = m.total - m.correct;
        let mut out = String::new();
        let _ = writeln!(out, "=== Stratified cross-validation ===");
        let _ = writeln!(out, "=== Summary ===\n");
        let _ = writeln!(
            out,
            "{:<32}{:>8}{:>16} %",
            "Correctly Classified Instances",
            m.correct,
            fmt_pct(100.0 * m.correct as f64 / n)
        );
        let _ = writeln!(
            out,
            "{:<32}{:>8}{:>16} %",
            "Incorrectly Classified Instances",
            wrong,
            fmt_pct(100.0 * wrong as f64 / n)
        );
        let _ = writeln!(out, "{:<32}{:>8.4}", "Kappa statistic", m.kappa);
        let _ = writeln!(out, "{:<32}{:>8.4}", "Mean absolute error", self.errors.mae);
        let _ = writeln!(out, "{:<32}{:>8.4}", "Root mean squared error", self.errors.rmse);
        let _ = writeln!(out, "{:<32}{:>8.4} %", "Relative absolute error", self.errors.rae);
        let _ = writeln!(out, "{:<32}{:>8.4} %", "Root relative squared error", self.errors.rrse);
        let _ = writeln!(out, "{:<32}{:>8}", "Total Number of Instances", m.total);
        let _ = writeln!(out, "\n=== Detailed Accuracy By Class ===\n");
        let _ = writeln!(
            out,
            "{:<15}{:<9}{:<9}{:<11}{:<8}{:<11}{:<7}{:<10}{:<10}Class",
            "", "TP Rate", "FP Rate", "Precision", "Recall", "F-Measure", "MCC", "ROC Area", "PRC Area"
        );
        let row = |label: &str, cm: &ClassMetrics, name: &str| {
            format!(
                "{:<15}{:<9}{:<9}{:<11}{:<8}{:<11}{:<7}{:<10}{:<10}{}",
                label,
                cell(cm.tp_rate),
                cell(cm.fp_rate),
                cell(cm.precision),
                cell(cm.recall),
                cell(cm.f_measure),
                cell(cm.mcc),
                opt_cell(cm.roc_area),
                opt_cell(cm.prc_area),
                name
            )
            .trim_end()
            .to_string()
        };
        for (i, cm) in m.per_class.iter().enumerate() {
            let _ = writeln!(out, "{}", row("", cm, &self.confusion.class_names[i]));
        }
        let _ = writeln!(out, "{}", row("Weighted Avg.", &m.weighted, ""));
        let _ = writeln!(out, "\n=== Confusion Matrix ===\n");
        let _ = write!(out, "{}", self.confusion);
        out
    }
}

fn fmt_pct(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}
