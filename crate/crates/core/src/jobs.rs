//! Whole-stream operations built on the engine: incremental sessions,
//! prequential evaluation, throughput benchmarks, grid search and synthetic
//! stream generation.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::engine::{BatchMode, ConfigError, EngineError, Pipeline, PipelineConfig, SampledPost, ThroughputReport};
use crate::evaluate::Metrics;
use crate::ingest::{generate_synthetic, parse_tweet, to_json_line, IngestCounters, SyntheticConfig};
use crate::model::{Alert, TweetRecord};

#[derive(Debug, Error)]
pub enum JobError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Internal(String),
}

impl From<ConfigError> for JobError {
    fn from(e: ConfigError) -> Self {
        JobError::Config(e.to_string())
    }
}

impl From<EngineError> for JobError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config(c) => JobError::Config(c.to_string()),
            other => JobError::Internal(other.to_string()),
        }
    }
}

/// Where a one-shot job reads its stream from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSpec {
    /// Newline-delimited JSON posts.
    Jsonl(String),
    Synthetic(SyntheticConfig),
}

impl InputSpec {
    pub fn lines(&self) -> Result<Vec<String>, JobError> {
        match self {
            InputSpec::Jsonl(text) => Ok(text.lines().filter(|l| !l.trim().is_empty()).map(str::to_string).collect()),
            InputSpec::Synthetic(cfg) => Ok(generate_synthetic(cfg)
                .map_err(|e| JobError::Config(e.to_string()))?
                .iter()
                .map(to_json_line)
                .collect()),
        }
    }
}

/// Records parsed from lines plus the number of lines that failed to parse.
pub fn parse_lines<S: AsRef<str>>(lines: &[S]) -> (Vec<TweetRecord>, u64) {
    let mut bad = 0;
    let records = lines
        .iter()
        .filter(|l| !l.as_ref().trim().is_empty())
        .filter_map(|l| match parse_tweet(l.as_ref()) {
            Ok(t) => Some(t),
            Err(e) => {
                log::debug!("skipping record: {e}");
                bad += 1;
                None
            }
        })
        .collect();
    (records, bad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub records: u64,
    pub parse_errors: u64,
    pub labeled: u64,
    pub batches: u64,
    pub class_names: Vec<String>,
    pub metrics: Option<Metrics>,
    pub window_metrics: Option<Metrics>,
    pub confusion: Vec<Vec<u64>>,
    pub predicted_unlabeled: Vec<u64>,
    pub alerts: u64,
    pub sampled: u64,
    pub model_version: u64,
    pub model_bytes: u64,
    pub lexicon_size: usize,
    pub seconds: f64,
    pub tweets_per_sec: f64,
}

/// Result of pushing lines into a session.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PushOutcome {
    pub accepted: u64,
    pub parse_errors: u64,
    pub batches: u64,
    pub alerts: Vec<Alert>,
    pub sample: Vec<SampledPost>,
}

impl PushOutcome {
    fn absorb(&mut self, other: PushOutcome) {
        self.accepted += other.accepted;
        self.parse_errors += other.parse_errors;
        self.batches += other.batches;
        self.alerts.extend(other.alerts);
        self.sample.extend(other.sample);
    }
}

/// A pipeline fed incrementally with raw lines. Batches are cut by record
/// count, or by wall-clock age of the oldest pending record.
#[derive(Debug)]
pub struct Session {
    pipeline: Pipeline,
    pending: Vec<TweetRecord>,
    opened: Option<Instant>,
    counters: IngestCounters,
    alerts: u64,
    sampled: u64,
}

impl Session {
    pub fn new(config: PipelineConfig) -> Result<Self, JobError> {
        Ok(Self {
            pipeline: Pipeline::new(config)?,
            pending: Vec::new(),
            opened: None,
            counters: IngestCounters::default(),
            alerts: 0,
            sampled: 0,
        })
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    pub fn counters(&self) -> IngestCounters {
        self.counters
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    fn run_batch(&mut self, records: Vec<TweetRecord>, out: &mut PushOutcome) -> Result<(), JobError> {
        let b = self.pipeline.process_batch(records)?;
        self.alerts += b.alerts.len() as u64;
        self.sampled += b.sample.len() as u64;
        out.batches += 1;
        out.sample.extend(b.sampled().map(SampledPost::from));
        out.alerts.extend(b.alerts);
        Ok(())
    }

    /// Adds one parsed record, running a batch when one is complete.
    pub fn push_record(&mut self, record: TweetRecord) -> Result<PushOutcome, JobError> {
        let mut out = PushOutcome { accepted: 1, ..Default::default() };
        self.counters.emitted += 1;
        self.opened.get_or_insert_with(Instant::now);
        self.pending.push(record);
        match self.pipeline.config().batch {
            BatchMode::Size(n) if self.pending.len() >= n => {
                let batch = std::mem::take(&mut self.pending);
                self.opened = None;
                self.run_batch(batch, &mut out)?;
            }
            BatchMode::IntervalMs(_) => out.absorb(self.tick()?),
            _ => {}
        }
        Ok(out)
    }

    /// Parses newline-delimited JSON and pushes every valid post.
    pub fn push_lines(&mut self, text: &str) -> Result<PushOutcome, JobError> {
        let mut out = PushOutcome::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            match parse_tweet(line) {
                Ok(t) => out.absorb(self.push_record(t)?),
                Err(e) => {
                    log::debug!("skipping record: {e}");
                    self.counters.skipped += 1;
                    out.parse_errors += 1;
                }
            }
        }
        Ok(out)
    }

    /// In interval mode, runs the pending batch once its interval elapsed.
    pub fn tick(&mut self) -> Result<PushOutcome, JobError> {
        if let (BatchMode::IntervalMs(ms), Some(t)) = (self.pipeline.config().batch, self.opened) {
            if t.elapsed() >= Duration::from_millis(ms) {
                return self.flush();
            }
        }
        Ok(PushOutcome::default())
    }

    /// Runs whatever is pending as a (possibly short) batch.
    pub fn flush(&mut self) -> Result<PushOutcome, JobError> {
        let mut out = PushOutcome::default();
        self.opened = None;
        if !self.pending.is_empty() {
            let batch = std::mem::take(&mut self.pending);
            self.run_batch(batch, &mut out)?;
        }
        Ok(out)
    }

    pub fn summary(&self) -> RunSummary {
        let p = &self.pipeline;
        let ev = p.evaluator();
        let tp = p.throughput();
        RunSummary {
            records: p.records_processed(),
            parse_errors: self.counters.skipped,
            labeled: ev.labeled_seen(),
            batches: p.batches_processed(),
            class_names: ev.class_names().to_vec(),
            metrics: ev.metrics().ok(),
            window_metrics: ev.window_metrics().ok(),
            confusion: ev.confusion().rows(),
            predicted_unlabeled: ev.unlabeled_predicted().to_vec(),
            alerts: self.alerts,
            sampled: self.sampled,
            model_version: p.model().version(),
            model_bytes: p.model().to_bytes().len() as u64,
            lexicon_size: p.lexicon().len(),
            seconds: tp.seconds,
            tweets_per_sec: tp.tweets_per_sec,
        }
    }

    pub fn report_csv(&self) -> String {
        self.pipeline.evaluator().report_csv()
    }

    pub fn throughput(&self) -> ThroughputReport {
        self.pipeline.throughput()
    }

    pub fn model_bytes(&self) -> Vec<u8> {
        self.pipeline.model().to_bytes()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub summary: RunSummary,
    pub report_csv: String,
}

/// Runs the whole stream prequentially.
pub fn run_eval(config: PipelineConfig, input: &InputSpec) -> Result<EvalResult, JobError> {
    let lines = input.lines()?;
    if lines.is_empty() {
        return Err(JobError::Input("input stream is empty".into()));
    }
    let config = PipelineConfig { batch: size_mode(config.batch), ..config };
    let mut s = Session::new(config)?;
    for l in &lines {
        s.push_lines(l)?;
    }
    s.flush()?;
    if s.pipeline().records_processed() == 0 {
        return Err(JobError::Input("no line of the input parsed as a post".into()));
    }
    if s.pipeline().evaluator().labeled_seen() == 0 {
        return Err(JobError::Input("evaluation needs labeled posts; the input has none".into()));
    }
    Ok(EvalResult { summary: s.summary(), report_csv: s.report_csv() })
}

fn size_mode(b: BatchMode) -> BatchMode {
    match b {
        BatchMode::Size(_) => b,
        BatchMode::IntervalMs(_) => BatchMode::default(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub workers: usize,
    pub records: u64,
    pub seconds: f64,
    pub tweets_per_sec: f64,
    /// Relative to the first row.
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub rows: Vec<BenchRow>,
    pub warnings: Vec<String>,
    pub available_parallelism: usize,
}

impl BenchResult {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("UTF-8")
    }
}

/// Times the full pipeline (parsing included) once per worker count.
pub fn run_bench(config: PipelineConfig, workers: &[usize], input: &InputSpec, replay_rate: f64) -> Result<BenchResult, JobError> {
    if workers.is_empty() || workers.contains(&0) {
        return Err(JobError::Config("workers list must contain positive counts".into()));
    }
    let mut warnings = Vec::new();
    if replay_rate > 0.0 {
        warnings.push(format!(
            "bench requires an unthrottled source; ignoring replay rate {replay_rate}/s"
        ));
    }
    if let BatchMode::IntervalMs(_) = config.batch {
        warnings.push("bench uses count-based batches; interval ignored".into());
    }
    let lines = input.lines()?;
    if lines.is_empty() {
        return Err(JobError::Input("input stream is empty".into()));
    }
    let mut rows: Vec<BenchRow> = Vec::new();
    for &w in workers {
        let cfg = PipelineConfig { workers: w, batch: size_mode(config.batch), ..config.clone() };
        let mut s = Session::new(cfg)?;
        let start = Instant::now();
        for l in &lines {
            s.push_lines(l)?;
        }
        s.flush()?;
        let seconds = start.elapsed().as_secs_f64();
        let records = s.pipeline().records_processed();
        let tps = crate::engine::ops::rate(records, seconds);
        let base = rows.first().map_or(tps, |r| r.tweets_per_sec);
        rows.push(BenchRow { workers: w, records, seconds, tweets_per_sec: tps, speedup: if base > 0.0 { tps / base } else { 0.0 } });
    }
    let available_parallelism = std::thread::available_parallelism().map_or(1, |n| n.get());
    if workers.iter().any(|&w| w > available_parallelism) {
        warnings.push(format!("host exposes {available_parallelism} hardware threads; larger worker counts oversubscribe"));
    }
    Ok(BenchResult { rows, warnings, available_parallelism })
}

/// Parameter name → candidate values.
pub type ParamGrid = BTreeMap<String, Vec<Value>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneRow {
    pub params: BTreeMap<String, Value>,
    pub f1: f64,
    pub accuracy: f64,
    pub best: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub rows: Vec<TuneRow>,
}

impl TuneResult {
    pub fn to_csv(&self) -> String {
        let keys: Vec<String> = self.rows.first().map(|r| r.params.keys().cloned().collect()).unwrap_or_default();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = keys.clone();
        header.extend(["f1", "accuracy", "best"].map(String::from));
        w.write_record(&header).expect("in-memory write");
        for r in &self.rows {
            let mut rec: Vec<String> = keys.iter().map(|k| r.params[k].to_string()).collect();
            rec.extend([r.f1.to_string(), r.accuracy.to_string(), r.best.to_string()]);
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("UTF-8")
    }
}

const PARAM_SECTIONS: [&[&str]; 6] = [&[], &["learner", "ht"], &["learner", "arf"], &["learner", "slr"], &["bow"], &["eval"]];

/// Sets `key` (a dotted path, or a bare name unique across the config
/// sections) in a serialized config.
fn set_param(config: &mut Value, key: &str, value: Value) -> Result<(), JobError> {
    let path: Vec<&str> = if key.contains('.') {
        key.split('.').collect()
    } else {
        let hits: Vec<Vec<&str>> = PARAM_SECTIONS
            .iter()
            .filter(|sec| {
                let mut v = &*config;
                for s in sec.iter() {
                    v = &v[*s];
                }
                v.get(key).is_some()
            })
            .map(|sec| sec.iter().copied().chain([key]).collect())
            .collect();
        match hits.len() {
            1 => hits.into_iter().next().expect("one hit"),
            0 => return Err(JobError::Config(format!("unknown parameter `{key}`"))),
            _ => return Err(JobError::Config(format!("parameter `{key}` is ambiguous; use a dotted path"))),
        }
    };
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut v = config;
    for p in parents {
        v = v.get_mut(*p).ok_or_else(|| JobError::Config(format!("unknown parameter `{key}`")))?;
    }
    let obj = v.as_object_mut().ok_or_else(|| JobError::Config(format!("unknown parameter `{key}`")))?;
    if !obj.contains_key(*last) {
        return Err(JobError::Config(format!("unknown parameter `{key}`")));
    }
    obj.insert(last.to_string(), value);
    Ok(())
}

/// Every combination of the grid, keys in sorted order.
pub fn expand_grid(grid: &ParamGrid) -> Result<Vec<BTreeMap<String, Value>>, JobError> {
    let mut combos = vec![BTreeMap::new()];
    for (k, values) in grid {
        if values.is_empty() {
            return Err(JobError::Config(format!("parameter `{k}` has no candidate values")));
        }
        combos = combos
            .into_iter()
            .flat_map(|c| {
                values.iter().map(move |v| {
                    let mut c = c.clone();
                    c.insert(k.clone(), v.clone());
                    c
                })
            })
            .collect();
    }
    Ok(combos)
}

pub fn apply_params(base: &PipelineConfig, params: &BTreeMap<String, Value>) -> Result<PipelineConfig, JobError> {
    let mut v = serde_json::to_value(base).map_err(|e| JobError::Internal(e.to_string()))?;
    for (k, val) in params {
        set_param(&mut v, k, val.clone())?;
    }
    let cfg: PipelineConfig = serde_json::from_value(v).map_err(|e| JobError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Replays the stream once per grid point; rows sorted by final weighted F1.
pub fn run_tune(config: PipelineConfig, grid: &ParamGrid, input: &InputSpec) -> Result<TuneResult, JobError> {
    let combos = expand_grid(grid)?;
    let configs: Vec<PipelineConfig> = combos.iter().map(|c| apply_params(&config, c)).collect::<Result<_, _>>()?;
    let lines = input.lines()?;
    let (records, _) = parse_lines(&lines);
    if records.iter().all(|r| r.label.is_none()) {
        return Err(JobError::Input("tuning needs a labeled stream".into()));
    }
    let mut rows = Vec::with_capacity(configs.len());
    for (params, cfg) in combos.into_iter().zip(configs) {
        let batch = match cfg.batch {
            BatchMode::Size(n) => n,
            BatchMode::IntervalMs(_) => 1024,
        };
        let mut p = Pipeline::new(cfg)?;
        for chunk in records.chunks(batch) {
            p.process_batch(chunk.to_vec())?;
        }
        let m = p.evaluator().metrics().map_err(|e| JobError::Internal(e.to_string()))?;
        rows.push(TuneRow { params, f1: m.weighted_f1, accuracy: m.accuracy, best: false });
    }
    rows.sort_by(|a, b| b.f1.total_cmp(&a.f1));
    if let Some(r) = rows.first_mut() {
        r.best = true;
    }
    Ok(TuneResult { rows })
}

/// Synthetic stream as JSON lines.
pub fn generate(config: &SyntheticConfig) -> Result<String, JobError> {
    let tweets = generate_synthetic(config).map_err(|e| JobError::Config(e.to_string()))?;
    let mut out = String::with_capacity(tweets.len() * 256);
    for t in &tweets {
        out.push_str(&to_json_line(t));
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn small() -> InputSpec {
        InputSpec::Synthetic(SyntheticConfig::with_size(600, 5))
    }

    #[test]
    fn eval_counts_records_and_errors() {
        let mut text = generate(&SyntheticConfig::with_size(300, 1)).unwrap();
        text.push_str("{not json\n\n{\"id\": 1}\n");
        let r = run_eval(PipelineConfig { batch: BatchMode::Size(64), ..Default::default() }, &InputSpec::Jsonl(text)).unwrap();
        assert_eq!(r.summary.records, 300);
        assert_eq!(r.summary.parse_errors, 2);
        assert_eq!(r.summary.batches, 5);
        assert!(r.summary.metrics.is_some());
        assert!(matches!(run_eval(PipelineConfig::default(), &InputSpec::Jsonl(String::new())), Err(JobError::Input(_))));
    }

    #[test]
    fn grid_expansion_and_params() {
        let grid: ParamGrid =
            [("split_confidence".to_string(), vec![json!(0.001), json!(0.01)]), ("tie_threshold".into(), vec![json!(0.05)])]
                .into_iter()
                .collect();
        assert_eq!(expand_grid(&grid).unwrap().len(), 2);
        let c = apply_params(&PipelineConfig::default(), &expand_grid(&grid).unwrap()[0]).unwrap();
        assert_eq!(c.learner.ht.split_confidence, 0.001);
        let bad: BTreeMap<String, Value> = [("nope".to_string(), json!(1))].into_iter().collect();
        assert!(matches!(apply_params(&PipelineConfig::default(), &bad), Err(JobError::Config(_))));
        let dotted: BTreeMap<String, Value> = [("learner.arf.ensemble_size".to_string(), json!(3))].into_iter().collect();
        assert_eq!(apply_params(&PipelineConfig::default(), &dotted).unwrap().learner.arf.ensemble_size, 3);
    }

    #[test]
    fn tune_is_deterministic_and_marks_best() {
        let grid: ParamGrid = [("grace_period".to_string(), vec![json!(50), json!(200)])].into_iter().collect();
        let a = run_tune(PipelineConfig::default(), &grid, &small()).unwrap();
        assert_eq!(a.rows.len(), 2);
        assert!(a.rows[0].best && !a.rows[1].best);
        assert!(a.rows[0].f1 >= a.rows[1].f1);
        assert_eq!(a, run_tune(PipelineConfig::default(), &grid, &small()).unwrap());
        let single = run_tune(PipelineConfig::default(), &ParamGrid::new(), &small()).unwrap();
        assert_eq!(single.rows.len(), 1);
    }

    #[test]
    fn bench_rows_and_rate_warning() {
        let r = run_bench(PipelineConfig::default(), &[1, 2], &small(), 100.0).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert_eq!(r.rows[0].speedup, 1.0);
        assert!(r.warnings.iter().any(|w| w.contains("unthrottled")));
        assert!(r.to_csv().starts_with("workers,records,seconds,tweets_per_sec,speedup"));
        assert_eq!(run_bench(PipelineConfig::default(), &[4], &small(), 0.0).unwrap().rows.len(), 1);
    }

    #[test]
    fn interval_session_flushes_on_tick() {
        let mut s = Session::new(PipelineConfig { batch: BatchMode::IntervalMs(1), ..Default::default() }).unwrap();
        let text = generate(&SyntheticConfig::with_size(5, 2)).unwrap();
        let first = s.push_lines(&text).unwrap();
        std::thread::sleep(Duration::from_millis(3));
        let later = s.tick().unwrap();
        assert!(first.batches + later.batches + s.flush().unwrap().batches >= 1);
        assert_eq!(s.pipeline().records_processed(), 5);
    }
}
