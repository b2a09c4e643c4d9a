mod common;

use common::oracle::oracle_run;
use tweetguard_core::engine::{BatchMode, EngineError, Pipeline, PipelineConfig};
use tweetguard_core::ingest::{generate_synthetic, parse_tweet, SyntheticConfig};
use tweetguard_core::learners::ClassifierKind;
use tweetguard_core::model::TweetRecord;
use tweetguard_core::normalize::NormalizationMode;

fn smoke() -> Vec<TweetRecord> {
    include_str!("../data/smoke.jsonl").lines().map(|l| parse_tweet(l).unwrap()).collect()
}

fn run(records: &[TweetRecord], config: PipelineConfig) -> (Pipeline, Vec<Vec<f64>>, Vec<usize>) {
    let b = match config.batch {
        BatchMode::Size(b) => b,
        _ => unreachable!(),
    };
    let mut p = Pipeline::new(config).unwrap();
    let (mut feats, mut preds) = (Vec::new(), Vec::new());
    for chunk in records.chunks(b) {
        for c in p.process_batch(chunk.to_vec()).unwrap().classified {
            feats.push(c.features);
            preds.push(c.predicted);
        }
    }
    (p, feats, preds)
}

#[test]
fn single_worker_matches_oracle_for_every_classifier() {
    let records = smoke();
    for classifier in ClassifierKind::ALL {
        for normalize in [NormalizationMode::Off, NormalizationMode::MinMaxNoOutliers, NormalizationMode::ZScore] {
            let cfg = PipelineConfig { classifier, normalize, batch: BatchMode::Size(256), ..Default::default() };
            let oracle = oracle_run(&records, &cfg);
            let (p, feats, preds) = run(&records, cfg);
            assert_eq!(p.evaluator().confusion(), &oracle.confusion, "{classifier} {normalize}");
            assert_eq!(preds, oracle.predictions);
            assert!(feats.iter().zip(&oracle.features).all(|(a, b)| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())));
            assert_eq!(p.model().fingerprint(), oracle.fingerprint);
        }
    }
}

#[test]
fn oracle_edge_cases() {
    let cfg = PipelineConfig::default();
    let empty = oracle_run(&[], &cfg);
    assert_eq!(empty.confusion.total(), 0);
    let records = smoke();
    assert_eq!(oracle_run(&records[..500], &cfg).fingerprint, oracle_run(&records[..500], &cfg).fingerprint);
}

#[test]
fn records_are_conserved_and_positions_consecutive() {
    let records = smoke();
    let (p, feats, _) = run(&records, PipelineConfig { batch: BatchMode::Size(300), ..Default::default() });
    assert_eq!(feats.len(), records.len());
    assert_eq!(p.records_processed(), records.len() as u64);
    assert_eq!(p.batches_processed(), 7);
    assert_eq!(p.evaluator().labeled_seen(), records.iter().filter(|r| r.is_labeled()).count() as u64);
}

#[test]
fn model_published_once_per_batch() {
    let records = smoke();
    let mut p = Pipeline::new(PipelineConfig { batch: BatchMode::Size(100), ..Default::default() }).unwrap();
    for (i, chunk) in records.chunks(100).take(5).enumerate() {
        let before = p.model().fingerprint();
        let out = p.process_batch(chunk.to_vec()).unwrap();
        assert_eq!(out.model_version, i as u64 + 1);
        assert_ne!(p.model().fingerprint(), before);
    }
}

#[test]
fn unlabeled_batch_leaves_model_untouched() {
    let records = smoke();
    let mut p = Pipeline::new(PipelineConfig { batch: BatchMode::Size(500), ..Default::default() }).unwrap();
    p.process_batch(records[..500].to_vec()).unwrap();
    let bytes = p.model().to_bytes();
    let unlabeled: Vec<TweetRecord> = records[500..900].iter().cloned().map(|r| TweetRecord { label: None, ..r }).collect();
    let out = p.process_batch(unlabeled).unwrap();
    assert_eq!(p.model().to_bytes(), bytes);
    assert_eq!(out.model_version, 1);
    assert_eq!(p.evaluator().unlabeled_predicted().iter().sum::<u64>(), 400);
}

#[test]
fn failed_partition_is_retried_once() {
    let records = smoke();
    let cfg = PipelineConfig { workers: 2, batch: BatchMode::Size(400), ..Default::default() };
    let (clean, _, _) = run(&records, cfg.clone());

    let mut p = Pipeline::new(cfg.clone()).unwrap();
    p.inject_worker_faults(1);
    let out = p.process_batch(records[..400].to_vec()).unwrap();
    assert!(out.retried);
    for chunk in records[400..].chunks(400) {
        assert!(!p.process_batch(chunk.to_vec()).unwrap().retried);
    }
    assert_eq!(p.model().fingerprint(), clean.model().fingerprint());
    assert_eq!(p.evaluator().confusion(), clean.evaluator().confusion());

    let mut q = Pipeline::new(cfg).unwrap();
    q.inject_worker_faults(100);
    assert!(matches!(q.process_batch(records[..400].to_vec()), Err(EngineError::WorkerFailed { batch: 0, .. })));
    assert_eq!(q.batches_processed(), 0);
    assert_eq!(q.model().version(), 0);
}

#[test]
fn reruns_are_bitwise_identical() {
    let records = generate_synthetic(&SyntheticConfig::with_size(3000, 9)).unwrap();
    for workers in [1, 3] {
        let cfg = PipelineConfig { workers, classifier: ClassifierKind::Arf, batch: BatchMode::Size(512), ..Default::default() };
        let (a, fa, _) = run(&records, cfg.clone());
        let (b, fb, _) = run(&records, cfg);
        assert_eq!(a.model().to_bytes(), b.model().to_bytes());
        let strip = |p: &Pipeline| {
            let mut rows = p.evaluator().report_rows();
            rows.iter_mut().for_each(|r| r.throughput = 0.0);
            rows
        };
        assert_eq!(strip(&a), strip(&b));
        assert_eq!(fa, fb);
    }
}

#[test]
fn worker_count_does_not_change_features_or_statistics() {
    let records = smoke();
    let (one, f1, _) = run(&records, PipelineConfig { batch: BatchMode::Size(256), ..Default::default() });
    for w in [2, 8] {
        let (many, fk, _) = run(&records, PipelineConfig { workers: w, batch: BatchMode::Size(256), ..Default::default() });
        assert_eq!(f1, fk);
        assert_eq!(one.snapshot(), many.snapshot());
        assert_eq!(one.lexicon(), many.lexicon());
    }
}

#[test]
fn alerts_and_samples_follow_config() {
    let records = smoke();
    let mut p = Pipeline::new(PipelineConfig { sample_rate: 1.0, alert_threshold: 0.0, ..Default::default() }).unwrap();
    let out = p.process_batch(records[..1024].to_vec()).unwrap();
    assert_eq!(out.sample.len(), 1024);
    let flagged = out.classified.iter().filter(|c| c.predicted != 0).count();
    assert_eq!(out.alerts.len(), flagged);
    let per_user: u64 = p.run_log().alerts_per_user.values().sum();
    assert_eq!(per_user, flagged as u64);

    let mut q = Pipeline::new(PipelineConfig { sample_rate: 0.0, alert_threshold: 1.0, ..Default::default() }).unwrap();
    let out = q.process_batch(records[..1024].to_vec()).unwrap();
    assert!(out.sample.is_empty());
    assert!(out.alerts.iter().all(|a| a.confidence >= 1.0));
}
