//! Micro-batch executor.
//!
//! Each batch is split into `workers` partitions. Workers clean and extract
//! features, normalize them against the statistics published at the previous
//! barrier, predict, and train a replica of the global model (prediction
//! first). The coordinator then merges replicas, statistics, lexicon counts and
//! evaluation logs, and publishes the new state for the next batch.

pub mod config;
pub mod ops;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{BatchMode, ConfigError, LexiconOverrides, PipelineConfig};
pub use ops::{alert_decision, boosted_sample, partition, throughput_report, ThroughputReport};

use crate::evaluate::{EvalError, PrequentialEvaluator};
use crate::features::{extract_all, AdaptiveBow, BowDelta, Lexicons, RefreshOutcome, WordSet};
use crate::learners::{LearnerError, Model, Replica};
use crate::model::{Alert, ClassDistribution, TweetRecord};
use crate::normalize::{FeatureStats, NormalizationMode, NormalizationSnapshot, RunningStats};
use crate::textprep;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("batch {batch} failed twice: {cause}")]
    WorkerFailed { batch: u64, cause: String },
    #[error("fatal: {0}")]
    Fatal(String),
    #[error("evaluation: {0}")]
    Eval(#[from] EvalError),
}

/// One post after prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classified {
    pub seq: u64,
    pub record: TweetRecord,
    /// Feature vector as presented to the model (after normalization).
    pub features: Vec<f64>,
    pub distribution: ClassDistribution,
    pub predicted: usize,
    pub predicted_label: String,
    pub actual: Option<usize>,
}

/// JSON-lines shape of a sampled post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledPost {
    #[serde(flatten)]
    pub record: TweetRecord,
    pub predicted: String,
    pub confidence: f64,
}

impl From<&Classified> for SampledPost {
    fn from(c: &Classified) -> Self {
        SampledPost { record: c.record.clone(), predicted: c.predicted_label.clone(), confidence: c.distribution.max_prob() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchLog {
    pub batch: u64,
    pub records: u64,
    pub labeled: u64,
    pub seconds: f64,
    pub model_version: u64,
    pub retried: bool,
    pub lexicon_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refresh: Option<RefreshOutcome>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub batches: Vec<BatchLog>,
    /// Alerts raised per user id (`"unknown"` when the record had none).
    pub alerts_per_user: BTreeMap<String, u64>,
}

impl RunLog {
    pub fn throughput(&self) -> ThroughputReport {
        let pairs: Vec<(u64, Duration)> =
            self.batches.iter().map(|b| (b.records, Duration::from_secs_f64(b.seconds))).collect();
        throughput_report(&pairs)
    }
}

#[derive(Debug, Clone)]
pub struct BatchOutput {
    pub batch: u64,
    pub classified: Vec<Classified>,
    pub alerts: Vec<Alert>,
    /// Positions in `classified` chosen by boosted sampling.
    pub sample: Vec<usize>,
    pub model_version: u64,
    pub refresh: Option<RefreshOutcome>,
    pub retried: bool,
}

impl BatchOutput {
    pub fn sampled(&self) -> impl Iterator<Item = &Classified> {
        self.sample.iter().map(|&i| &self.classified[i])
    }
}

/// Worker-side view of a record after feature extraction.
struct Prepared {
    pos: usize,
    seq: u64,
    raw: Vec<f64>,
    actual: Option<usize>,
}

struct PartitionResult {
    replica: Replica,
    /// `(pos, normalized features, distribution)`
    predictions: Vec<(usize, Vec<f64>, ClassDistribution)>,
    /// `(seq, actual, predicted)` in partition order.
    log: Vec<(u64, Option<usize>, usize)>,
}

struct BatchWork {
    partitions: Vec<PartitionResult>,
    bow: Vec<BowDelta>,
    stats_delta: Option<RunningStats>,
}

/// Coordinator-owned pipeline state.
pub struct Pipeline {
    config: PipelineConfig,
    lexicons: Arc<Lexicons>,
    model: Model,
    stats: RunningStats,
    published: Arc<NormalizationSnapshot>,
    preloaded: bool,
    bow: Option<AdaptiveBow>,
    swear: Arc<WordSet>,
    evaluator: PrequentialEvaluator,
    pool: rayon::ThreadPool,
    next_batch: u64,
    next_seq: u64,
    run_log: RunLog,
    elapsed: Duration,
    records: u64,
    faults: AtomicU32,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline")
            .field("config", &self.config)
            .field("next_batch", &self.next_batch)
            .field("next_seq", &self.next_seq)
            .finish_non_exhaustive()
    }
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let lexicons = Arc::new(config.load_lexicons()?);
        let preloaded_stats = config.load_stats()?;
        let m = config.features.len();
        let k = config.classes.num_classes();
        let model = Model::new(config.classifier, &config.learner, k, m, config.seed)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let bow = if config.adaptive_bow {
            Some(AdaptiveBow::new(lexicons.swear_seed.clone(), config.bow.clone()).map_err(|e| ConfigError::Invalid(e.to_string()))?)
        } else {
            None
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .thread_name(|i| format!("tg-worker-{i}"))
            .build()
            .map_err(|e| EngineError::Fatal(format!("worker pool: {e}")))?;
        Ok(Self {
            evaluator: PrequentialEvaluator::new(config.class_names(), config.eval),
            swear: Arc::new(lexicons.swear_seed.clone()),
            preloaded: preloaded_stats.is_some(),
            published: Arc::new(preloaded_stats.unwrap_or_else(|| NormalizationSnapshot::empty(m))),
            stats: RunningStats::new(m),
            lexicons,
            model,
            bow,
            pool,
            config,
            next_batch: 0,
            next_seq: 0,
            run_log: RunLog::default(),
            elapsed: Duration::ZERO,
            records: 0,
            faults: AtomicU32::new(0),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn evaluator(&self) -> &PrequentialEvaluator {
        &self.evaluator
    }

    pub fn stats(&self) -> &RunningStats {
        &self.stats
    }

    pub fn snapshot(&self) -> &NormalizationSnapshot {
        &self.published
    }

    /// Swear-word lexicon in force for the next batch.
    pub fn lexicon(&self) -> &WordSet {
        &self.swear
    }

    pub fn run_log(&self) -> &RunLog {
        &self.run_log
    }

    pub fn batches_processed(&self) -> u64 {
        self.next_batch
    }

    pub fn records_processed(&self) -> u64 {
        self.records
    }

    pub fn throughput(&self) -> ThroughputReport {
        self.run_log.throughput()
    }

    /// Makes the next `n` partition executions panic (tests of the retry path).
    #[doc(hidden)]
    pub fn inject_worker_faults(&self, n: u32) {
        self.faults.store(n, Ordering::SeqCst);
    }

    fn learns_stats(&self) -> bool {
        self.config.normalize != NormalizationMode::Off && !self.preloaded
    }

    /// Processes one micro-batch; records receive consecutive stream positions.
    pub fn process_batch(&mut self, records: Vec<TweetRecord>) -> Result<BatchOutput, EngineError> {
        let start = Instant::now();
        let batch = self.next_batch;
        let first_seq = self.next_seq;

        let mut retried = false;
        let work = match self.run_guarded(&records, batch, first_seq) {
            Ok(w) => w,
            Err(cause) => {
                log::warn!("batch {batch} failed ({cause}); retrying once");
                retried = true;
                self.run_guarded(&records, batch, first_seq)
                    .map_err(|cause| EngineError::WorkerFailed { batch, cause })?
            }
        };
        let out = self.barrier(records, work, batch, first_seq, start, retried)?;
        Ok(out)
    }

    fn run_guarded(&self, records: &[TweetRecord], batch: u64, first_seq: u64) -> Result<BatchWork, String> {
        match catch_unwind(AssertUnwindSafe(|| self.compute(records, batch, first_seq))) {
            Ok(Ok(w)) => Ok(w),
            Ok(Err(e)) => Err(e.to_string()),
            Err(panic) => Err(panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "worker panicked".into())),
        }
    }

    fn maybe_fault(&self) {
        let hit = self.faults.fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1)).is_ok();
        if hit {
            panic!("injected worker fault");
        }
    }

    /// Parallel part of a batch; pure with respect to coordinator state.
    fn compute(&self, records: &[TweetRecord], batch: u64, first_seq: u64) -> Result<BatchWork, LearnerError> {
        let cfg = &self.config;
        let parts = partition(records.len(), cfg.workers, cfg.seed, batch);
        let scheme = cfg.classes;
        let lex = &*self.lexicons;
        let swear = &*self.swear;
        let track_bow = self.bow.is_some();

        // map: clean, extract, count lexicon words
        let prepared: Vec<(Vec<Prepared>, BowDelta)> = self.pool.install(|| {
            parts
                .par_iter()
                .map(|part| {
                    self.maybe_fault();
                    let mut bow = BowDelta::default();
                    let items = part
                        .iter()
                        .map(|&pos| {
                            let r = &records[pos];
                            let text = if cfg.preprocess { textprep::clean(&r.text) } else { textprep::passthrough(&r.text) };
                            let actual = r.label.map(|l| scheme.effective(l));
                            if let (true, Some(y)) = (track_bow, actual) {
                                bow.observe(&text.tokens, y != 0);
                            }
                            let raw = cfg.features.project(&extract_all(r, &text, swear, lex));
                            Prepared { pos, seq: first_seq + pos as u64, raw, actual }
                        })
                        .collect();
                    (items, bow)
                })
                .collect()
        });

        // this batch's feature statistics, per feature in stream order
        let stats_delta = self.learns_stats().then(|| {
            let mut ordered: Vec<&Prepared> = prepared.iter().flat_map(|(p, _)| p.iter()).collect();
            ordered.sort_unstable_by_key(|p| p.pos);
            let per_feature: Vec<FeatureStats> = self.pool.install(|| {
                (0..cfg.features.len())
                    .into_par_iter()
                    .map(|f| {
                        let mut s = FeatureStats::default();
                        ordered.iter().for_each(|p| s.update(p.raw[f]));
                        s
                    })
                    .collect()
            });
            RunningStats::from_features(per_feature)
        });
        let bootstrap;
        let snapshot: &NormalizationSnapshot = match &stats_delta {
            Some(delta) if self.stats.n() == 0 => {
                bootstrap = delta.snapshot();
                &bootstrap
            }
            _ => &self.published,
        };

        // train: normalize, predict, then train the replica
        let mut bows = Vec::with_capacity(prepared.len());
        let items: Vec<Vec<Prepared>> = prepared
            .into_iter()
            .map(|(p, b)| {
                bows.push(b);
                p
            })
            .collect();
        let model = &self.model;
        let partitions: Vec<PartitionResult> = self.pool.install(|| {
            items
                .into_par_iter()
                .map(|part| {
                    let mut replica = model.fork();
                    let mut predictions = Vec::with_capacity(part.len());
                    let mut log = Vec::with_capacity(part.len());
                    for Prepared { pos, seq, mut raw, actual } in part {
                        snapshot.apply(&mut raw, cfg.normalize);
                        let dist = replica.predict(&raw);
                        let predicted = dist.argmax();
                        if let Some(y) = actual {
                            replica.train(&raw, y, seq)?;
                        }
                        log.push((seq, actual, predicted));
                        predictions.push((pos, raw, dist));
                    }
                    Ok(PartitionResult { replica, predictions, log })
                })
                .collect::<Result<_, LearnerError>>()
        })?;
        Ok(BatchWork { partitions, bow: bows, stats_delta })
    }

    fn barrier(
        &mut self,
        records: Vec<TweetRecord>,
        work: BatchWork,
        batch: u64,
        first_seq: u64,
        start: Instant,
        retried: bool,
    ) -> Result<BatchOutput, EngineError> {
        let n = records.len();
        let BatchWork { partitions, bow, stats_delta } = work;

        let mut log = Vec::with_capacity(n);
        let mut slots: Vec<Option<(Vec<f64>, ClassDistribution)>> = vec![None; n];
        let mut replicas = Vec::with_capacity(partitions.len());
        for p in partitions {
            replicas.push(p.replica);
            log.extend(p.log);
            for (pos, x, d) in p.predictions {
                slots[pos] = Some((x, d));
            }
        }

        let labeled = self.model.merge(replicas).map_err(|e| match e {
            LearnerError::VersionMismatch { .. } => EngineError::Fatal(e.to_string()),
            other => EngineError::Fatal(format!("merge: {other}")),
        })?;

        if let Some(delta) = stats_delta {
            self.stats.merge(&delta);
            self.published = Arc::new(self.stats.snapshot());
        }

        let mut refresh = None;
        if let Some(b) = self.bow.as_mut() {
            for d in bow {
                b.apply(d);
            }
            refresh = b.refresh_if_due();
            if refresh.is_some() {
                self.swear = Arc::new(b.lexicon().clone());
            }
        }

        let elapsed_before_eval = start.elapsed();
        self.evaluator.set_throughput(ops::rate(self.records + n as u64, (self.elapsed + elapsed_before_eval).as_secs_f64()));
        log.sort_unstable_by_key(|(seq, _, _)| *seq);
        for &(_, actual, predicted) in &log {
            match actual {
                Some(y) => self.evaluator.step(predicted, y)?,
                None => self.evaluator.observe_unlabeled(predicted)?,
            }
        }

        let cfg = &self.config;
        let now = chrono::Utc::now().timestamp_millis();
        let mut classified = Vec::with_capacity(n);
        let mut alerts = Vec::new();
        let mut sample = Vec::new();
        for (pos, (record, slot)) in records.into_iter().zip(slots).enumerate() {
            let (features, distribution) = slot.ok_or_else(|| EngineError::Fatal(format!("record {pos} was not classified")))?;
            let seq = first_seq + pos as u64;
            let predicted = distribution.argmax();
            if let Some((class, confidence)) = alert_decision(&distribution, cfg.alert_threshold) {
                let user = record.user.id.clone().unwrap_or_else(|| "unknown".into());
                *self.run_log.alerts_per_user.entry(user).or_insert(0) += 1;
                alerts.push(Alert {
                    source_id: record.id.clone(),
                    label: cfg.classes.class_name(class).to_string(),
                    confidence,
                    emitted_at: now,
                });
            }
            if ops::sample_keep(seq, predicted, cfg.sample_rate, cfg.boost_factor, cfg.seed) {
                sample.push(pos);
            }
            classified.push(Classified {
                seq,
                actual: record.label.map(|l| cfg.classes.effective(l)),
                record,
                features,
                predicted_label: cfg.classes.class_name(predicted).to_string(),
                predicted,
                distribution,
            });
        }

        let took = start.elapsed();
        self.elapsed += took;
        self.records += n as u64;
        self.next_seq += n as u64;
        self.next_batch += 1;
        self.run_log.batches.push(BatchLog {
            batch,
            records: n as u64,
            labeled,
            seconds: took.as_secs_f64(),
            model_version: self.model.version(),
            retried,
            lexicon_size: self.swear.len(),
            refresh: refresh.clone(),
        });
        Ok(BatchOutput { batch, classified, alerts, sample, model_version: self.model.version(), refresh, retried })
    }
}
