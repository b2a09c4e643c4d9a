//! Confusion-matrix metrics and prequential (test-then-train) evaluation.
//!
//! Report CSV columns, in order:
//!
//! ```text
//! instances_seen, labeled_seen,
//! accuracy, precision, recall, f1,                       cumulative, support-weighted
//! window_accuracy, window_precision, window_recall, window_f1,
//! f1_<class>...,                                         cumulative, per class
//! pred_<class>...,                                       share of unlabeled posts predicted as class
//! throughput                                             tweets/s at the time of the row
//! ```
//!
//! Metric cells are empty when no labeled instance was seen; `pred_*` cells
//! are empty when no unlabeled instance was seen.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("metrics are undefined for an empty confusion matrix")]
    Empty,
    #[error("class index {0} outside the matrix")]
    Class(usize),
    #[error("report CSV: {0}")]
    Csv(String),
}

/// Rows are actual classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        Self { k, counts: vec![0; k * k] }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Self {
        let k = rows.len();
        assert!(rows.iter().all(|r| r.len() == k), "confusion matrix must be square");
        Self { k, counts: rows.concat() }
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn get(&self, actual: usize, predicted: usize) -> u64 {
        self.counts[actual * self.k + predicted]
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.k.max(1)).map(<[u64]>::to_vec).collect()
    }

    pub fn add(&mut self, actual: usize, predicted: usize) -> Result<(), EvalError> {
        self.add_n(actual, predicted, 1)
    }

    fn add_n(&mut self, actual: usize, predicted: usize, n: u64) -> Result<(), EvalError> {
        for c in [actual, predicted] {
            if c >= self.k {
                return Err(EvalError::Class(c));
            }
        }
        self.counts[actual * self.k + predicted] += n;
        Ok(())
    }

    fn remove(&mut self, actual: usize, predicted: usize) {
        self.counts[actual * self.k + predicted] -= 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.k, other.k, "confusion matrices of different sizes");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn metrics(&self) -> Result<Metrics, EvalError> {
        let total = self.total();
        if total == 0 {
            return Err(EvalError::Empty);
        }
        let k = self.k;
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let diag: Vec<u64> = (0..k).map(|c| self.get(c, c)).collect();
        let support: Vec<u64> = (0..k).map(|a| (0..k).map(|p| self.get(a, p)).sum()).collect();
        let predicted: Vec<u64> = (0..k).map(|p| (0..k).map(|a| self.get(a, p)).sum()).collect();
        let precision: Vec<f64> = (0..k).map(|c| ratio(diag[c], predicted[c])).collect();
        let recall: Vec<f64> = (0..k).map(|c| ratio(diag[c], support[c])).collect();
        let f1s: Vec<f64> = precision.iter().zip(&recall).map(|(&p, &r)| f1(p, r)).collect();
        let weighted = |v: &[f64]| v.iter().zip(&support).map(|(x, &s)| x * s as f64).sum::<f64>() / total as f64;
        Ok(Metrics {
            accuracy: ratio(diag.iter().sum(), total),
            weighted_precision: weighted(&precision),
            weighted_recall: weighted(&recall),
            weighted_f1: weighted(&f1s),
            precision,
            recall,
            f1: f1s,
            support,
        })
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub support: Vec<u64>,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
}

/// Headline (support-weighted) values of one metrics computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<&Metrics> for Summary {
    fn from(m: &Metrics) -> Self {
        Summary { accuracy: m.accuracy, precision: m.weighted_precision, recall: m.weighted_recall, f1: m.weighted_f1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub instances_seen: u64,
    pub labeled_seen: u64,
    pub cumulative: Option<Summary>,
    pub window: Option<Summary>,
    pub class_f1: Option<Vec<f64>>,
    pub predicted_share: Option<Vec<f64>>,
    pub throughput: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalParams {
    /// Sliding window length for windowed metrics.
    pub window: usize,
    /// Labeled instances between report rows.
    pub sample_every: u64,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self { window: 1000, sample_every: 500 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrequentialEvaluator {
    class_names: Vec<String>,
    params: EvalParams,
    cumulative: ConfusionMatrix,
    window: VecDeque<(usize, usize)>,
    window_cm: ConfusionMatrix,
    instances_seen: u64,
    labeled_seen: u64,
    unlabeled_predicted: Vec<u64>,
    throughput: f64,
    history: Vec<ReportRow>,
}

impl PrequentialEvaluator {
    pub fn new(class_names: Vec<String>, params: EvalParams) -> Self {
        let k = class_names.len();
        Self {
            class_names,
            params: EvalParams { window: params.window.max(1), sample_every: params.sample_every.max(1) },
            cumulative: ConfusionMatrix::new(k),
            window: VecDeque::new(),
            window_cm: ConfusionMatrix::new(k),
            instances_seen: 0,
            labeled_seen: 0,
            unlabeled_predicted: vec![0; k],
            throughput: 0.0,
            history: Vec::new(),
        }
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn instances_seen(&self) -> u64 {
        self.instances_seen
    }

    pub fn labeled_seen(&self) -> u64 {
        self.labeled_seen
    }

    pub fn confusion(&self) -> &ConfusionMatrix {
        &self.cumulative
    }

    pub fn window_confusion(&self) -> &ConfusionMatrix {
        &self.window_cm
    }

    pub fn history(&self) -> &[ReportRow] {
        &self.history
    }

    pub fn unlabeled_predicted(&self) -> &[u64] {
        &self.unlabeled_predicted
    }

    pub fn set_throughput(&mut self, tweets_per_sec: f64) {
        self.throughput = tweets_per_sec;
    }

    /// Records a labeled prediction made before training on the instance.
    pub fn step(&mut self, predicted: usize, actual: usize) -> Result<(), EvalError> {
        self.cumulative.add(actual, predicted)?;
        self.window_cm.add_n(actual, predicted, 1)?;
        self.window.push_back((actual, predicted));
        if self.window.len() > self.params.window {
            let (a, p) = self.window.pop_front().expect("window non-empty");
            self.window_cm.remove(a, p);
        }
        self.instances_seen += 1;
        self.labeled_seen += 1;
        if self.labeled_seen.is_multiple_of(self.params.sample_every) {
            let row = self.current_row();
            self.history.push(row);
        }
        Ok(())
    }

    pub fn observe_unlabeled(&mut self, predicted: usize) -> Result<(), EvalError> {
        let slot = self.unlabeled_predicted.get_mut(predicted).ok_or(EvalError::Class(predicted))?;
        *slot += 1;
        self.instances_seen += 1;
        Ok(())
    }

    pub fn metrics(&self) -> Result<Metrics, EvalError> {
        self.cumulative.metrics()
    }

    pub fn window_metrics(&self) -> Result<Metrics, EvalError> {
        self.window_cm.metrics()
    }

    pub fn current_row(&self) -> ReportRow {
        let cum = self.cumulative.metrics().ok();
        let unlabeled: u64 = self.unlabeled_predicted.iter().sum();
        ReportRow {
            instances_seen: self.instances_seen,
            labeled_seen: self.labeled_seen,
            cumulative: cum.as_ref().map(Summary::from),
            window: self.window_cm.metrics().ok().as_ref().map(Summary::from),
            class_f1: cum.map(|m| m.f1),
            predicted_share: (unlabeled > 0)
                .then(|| self.unlabeled_predicted.iter().map(|&c| c as f64 / unlabeled as f64).collect()),
            throughput: self.throughput,
        }
    }

    /// Sampled rows; a run without labeled data yields one final row that
    /// carries only the predicted-label shares.
    pub fn report_rows(&self) -> Vec<ReportRow> {
        if self.labeled_seen == 0 && self.instances_seen > 0 {
            return vec![self.current_row()];
        }
        self.history.clone()
    }

    pub fn header(&self) -> Vec<String> {
        report_header(&self.class_names)
    }

    pub fn report_csv(&self) -> String {
        write_report(&self.class_names, &self.report_rows())
    }
}

pub fn report_header(class_names: &[String]) -> Vec<String> {
    let mut h: Vec<String> = ["instances_seen", "labeled_seen", "accuracy", "precision", "recall", "f1"]
        .into_iter()
        .chain(["window_accuracy", "window_precision", "window_recall", "window_f1"])
        .map(String::from)
        .collect();
    h.extend(class_names.iter().map(|c| format!("f1_{c}")));
    h.extend(class_names.iter().map(|c| format!("pred_{c}")));
    h.push("throughput".into());
    h
}

fn cells(v: Option<&[f64]>, n: usize) -> Vec<String> {
    match v {
        Some(xs) => xs.iter().map(f64::to_string).collect(),
        None => vec![String::new(); n],
    }
}

fn summary_cells(s: Option<Summary>) -> Vec<String> {
    cells(s.map(|s| [s.accuracy, s.precision, s.recall, s.f1]).as_ref().map(|a| &a[..]), 4)
}

pub fn write_report(class_names: &[String], rows: &[ReportRow]) -> String {
    let k = class_names.len();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(report_header(class_names)).expect("in-memory write");
    for r in rows {
        let mut rec = vec![r.instances_seen.to_string(), r.labeled_seen.to_string()];
        rec.extend(summary_cells(r.cumulative));
        rec.extend(summary_cells(r.window));
        rec.extend(cells(r.class_f1.as_deref(), k));
        rec.extend(cells(r.predicted_share.as_deref(), k));
        rec.push(r.throughput.to_string());
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("CSV is UTF-8")
}

/// Parses a report produced by [`write_report`].
pub fn parse_report(text: &str, num_classes: usize) -> Result<Vec<ReportRow>, EvalError> {
    let err = |e: &dyn std::fmt::Display| EvalError::Csv(e.to_string());
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let expected = 11 + 2 * num_classes;
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| err(&e))?;
        if rec.len() != expected {
            return Err(EvalError::Csv(format!("expected {expected} columns, found {}", rec.len())));
        }
        let f = |i: usize| -> Result<Option<f64>, EvalError> {
            let s = &rec[i];
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|e| err(&e))
            }
        };
        let group = |start: usize, n: usize| -> Result<Option<Vec<f64>>, EvalError> {
            let v: Vec<Option<f64>> = (start..start + n).map(f).collect::<Result<_, _>>()?;
            Ok(v.into_iter().collect())
        };
        let summary = |start: usize| -> Result<Option<Summary>, EvalError> {
            Ok(group(start, 4)?.map(|v| Summary { accuracy: v[0], precision: v[1], recall: v[2], f1: v[3] }))
        };
        out.push(ReportRow {
            instances_seen: rec[0].parse().map_err(|e| err(&e))?,
            labeled_seen: rec[1].parse().map_err(|e| err(&e))?,
            cumulative: summary(2)?,
            window: summary(6)?,
            class_f1: group(10, num_classes)?,
            predicted_share: group(10 + num_classes, num_classes)?,
            throughput: f(expected - 1)?.unwrap_or(0.0),
        });
    }
    Ok(out)
}
