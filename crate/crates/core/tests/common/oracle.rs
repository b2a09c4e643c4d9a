//! Sequential reference pipeline for equivalence tests.
//!
//! One record at a time, no partitioning, no worker pool. Model, statistics
//! and lexicon are published every `B` records, the cadence the engine uses.

use tweetguard_core::engine::{BatchMode, PipelineConfig};
use tweetguard_core::evaluate::ConfusionMatrix;
use tweetguard_core::features::{extract_all, AdaptiveBow};
use tweetguard_core::learners::Model;
use tweetguard_core::model::TweetRecord;
use tweetguard_core::normalize::{NormalizationMode, NormalizationSnapshot, RunningStats};
use tweetguard_core::textprep;

pub struct OracleRun {
    pub confusion: ConfusionMatrix,
    pub fingerprint: u64,
    /// Normalized feature vector of every record, in stream order.
    pub features: Vec<Vec<f64>>,
    pub predictions: Vec<usize>,
    pub model: Model,
}

pub fn oracle_run(records: &[TweetRecord], config: &PipelineConfig) -> OracleRun {
    let b = match config.batch {
        BatchMode::Size(n) => n,
        BatchMode::IntervalMs(_) => panic!("oracle needs count-based batches"),
    };
    let k = config.classes.num_classes();
    let m = config.features.len();
    let lex = config.load_lexicons().expect("lexicons");
    let preloaded = config.load_stats().expect("stats");
    let learn_stats = config.normalize != NormalizationMode::Off && preloaded.is_none();
    let mut model = Model::new(config.classifier, &config.learner, k, m, config.seed).expect("model");
    let mut stats = RunningStats::new(m);
    let mut published = preloaded.unwrap_or_else(|| NormalizationSnapshot::empty(m));
    let mut bow = config.adaptive_bow.then(|| AdaptiveBow::new(lex.swear_seed.clone(), config.bow.clone()).expect("bow"));
    let mut swear = lex.swear_seed.clone();

    let mut confusion = ConfusionMatrix::new(k);
    let mut features = Vec::with_capacity(records.len());
    let mut predictions = Vec::with_capacity(records.len());
    let mut seq = 0u64;

    for chunk in records.chunks(b) {
        let mut raws = Vec::with_capacity(chunk.len());
        for r in chunk {
            let text = if config.preprocess { textprep::clean(&r.text) } else { textprep::passthrough(&r.text) };
            let y = r.label.map(|l| config.classes.effective(l));
            if let (Some(bow), Some(y)) = (bow.as_mut(), y) {
                bow.observe(&text.tokens, y != 0);
            }
            raws.push((config.features.project(&extract_all(r, &text, &swear, &lex)), y));
        }

        let mut delta = RunningStats::new(m);
        if learn_stats {
            for (x, _) in &raws {
                delta.update(x);
            }
        }
        let snapshot = if learn_stats && stats.n() == 0 { delta.snapshot() } else { published.clone() };

        let mut replica = model.fork();
        for (mut x, y) in raws {
            snapshot.apply(&mut x, config.normalize);
            let predicted = replica.predict(&x).argmax();
            if let Some(y) = y {
                confusion.add(y, predicted).expect("label in range");
                replica.train(&x, y, seq).expect("train");
            }
            features.push(x);
            predictions.push(predicted);
            seq += 1;
        }
        model.merge(vec![replica]).expect("merge");

        if learn_stats {
            stats.merge(&delta);
            published = stats.snapshot();
        }
        if let Some(bow) = bow.as_mut() {
            if bow.refresh_if_due().is_some() {
                swear = bow.lexicon().clone();
            }
        }
    }

    OracleRun { confusion, fingerprint: model.fingerprint(), features, predictions, model }
}
