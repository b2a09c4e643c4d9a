//! Per-batch helpers: partitioning, alerting, boosted sampling, throughput.

use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::ClassDistribution;
use crate::util::mix;

const PARTITION_SALT: u64 = 0x7061_7274;
const SAMPLE_SALT: u64 = 0x7361_6d70;

/// Seeded balanced assignment of `n` batch positions to `k` partitions.
/// Each partition lists positions in increasing order; sizes differ by at most one.
pub fn partition(n: usize, k: usize, seed: u64, batch_index: u64) -> Vec<Vec<usize>> {
    let k = k.max(1);
    let mut order: Vec<usize> = (0..n).collect();
    if k > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(&[seed, PARTITION_SALT, batch_index]));
        order.shuffle(&mut rng);
    }
    let mut parts = vec![Vec::with_capacity(n / k + 1); k];
    for (i, pos) in order.into_iter().enumerate() {
        parts[i % k].push(pos);
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    parts
}

/// `(class, confidence)` when the most likely class is not the normal class
/// (index 0) and its probability reaches `threshold`.
pub fn alert_decision(dist: &ClassDistribution, threshold: f64) -> Option<(usize, f64)> {
    let c = dist.argmax();
    let p = dist.max_prob();
    (c != 0 && p >= threshold).then_some((c, p))
}

/// Inclusion probability for a post predicted as `class`.
pub fn keep_probability(class: usize, sample_rate: f64, boost_factor: f64) -> f64 {
    if class == 0 {
        sample_rate
    } else {
        (boost_factor * sample_rate).min(1.0)
    }
}

/// Independent, reproducible inclusion draw for the post at stream position `seq`.
pub fn sample_keep(seq: u64, class: usize, sample_rate: f64, boost_factor: f64, seed: u64) -> bool {
    let p = keep_probability(class, sample_rate, boost_factor);
    if p <= 0.0 {
        return false;
    }
    if p >= 1.0 {
        return true;
    }
    let u = (mix(&[seed, SAMPLE_SALT, seq]) >> 11) as f64 / (1u64 << 53) as f64;
    u < p
}

/// Positions of `(seq, predicted class)` pairs kept by boosted sampling.
pub fn boosted_sample(items: &[(u64, usize)], sample_rate: f64, boost_factor: f64, seed: u64) -> Vec<usize> {
    items
        .iter()
        .enumerate()
        .filter(|(_, &(seq, class))| sample_keep(seq, class, sample_rate, boost_factor, seed))
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchThroughput {
    pub batch: u64,
    pub records: u64,
    pub seconds: f64,
    pub tweets_per_sec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub records: u64,
    pub seconds: f64,
    pub tweets_per_sec: f64,
    pub per_batch: Vec<BatchThroughput>,
}

pub fn rate(records: u64, seconds: f64) -> f64 {
    if seconds > 0.0 {
        records as f64 / seconds
    } else {
        0.0
    }
}

/// Overall and per-batch tweets per second from `(records, duration)` pairs.
pub fn throughput_report(batches: &[(u64, Duration)]) -> ThroughputReport {
    let per_batch: Vec<BatchThroughput> = batches
        .iter()
        .enumerate()
        .map(|(i, &(records, d))| BatchThroughput {
            batch: i as u64,
            records,
            seconds: d.as_secs_f64(),
            tweets_per_sec: rate(records, d.as_secs_f64()),
        })
        .collect();
    let records = per_batch.iter().map(|b| b.records).sum();
    let seconds = per_batch.iter().map(|b| b.seconds).sum();
    ThroughputReport { records, seconds, tweets_per_sec: rate(records, seconds), per_batch }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_shapes() {
        assert_eq!(partition(5, 1, 0, 0), vec![vec![0, 1, 2, 3, 4]]);
        assert_eq!(partition(0, 3, 0, 0), vec![Vec::<usize>::new(); 3]);
        let p = partition(10, 3, 9, 1);
        let mut sizes: Vec<usize> = p.iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![3, 3, 4]);
        let mut all: Vec<usize> = p.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(partition(10, 3, 9, 1), p);
        assert_ne!(partition(100, 3, 9, 1), partition(100, 3, 10, 1));
    }

    #[test]
    fn alert_rule() {
        let d = |v: Vec<f64>| ClassDistribution::from_weights(v);
        assert_eq!(alert_decision(&d(vec![0.9, 0.05, 0.05]), 0.0), None);
        let (c, p) = alert_decision(&d(vec![0.2, 0.7, 0.1]), 0.0).unwrap();
        assert_eq!(c, 1);
        assert!((p - 0.7).abs() < 1e-12);
        assert_eq!(alert_decision(&d(vec![0.2, 0.75, 0.05]), 0.8), None);
        assert_eq!(alert_decision(&d(vec![0.1, 0.1, 0.8]), 0.79).map(|a| a.0), Some(2));
    }

    #[test]
    fn sampling_extremes_and_binomial() {
        let items: Vec<(u64, usize)> = (0..10_000).map(|s| (s, 1)).collect();
        assert!(boosted_sample(&items, 0.0, 10.0, 1).is_empty());
        assert_eq!(boosted_sample(&items, 1.0, 1.0, 1).len(), 10_000);
        let kept = boosted_sample(&items, 0.01, 10.0, 1).len() as f64;
        let sd = (10_000.0f64 * 0.1 * 0.9).sqrt();
        assert!((kept - 1000.0).abs() <= 3.0 * sd, "{kept}");
        let normal: Vec<(u64, usize)> = (0..10_000).map(|s| (s, 0)).collect();
        let kept = boosted_sample(&normal, 0.01, 10.0, 1).len() as f64;
        assert!((kept - 100.0).abs() <= 3.0 * (10_000.0f64 * 0.01 * 0.99).sqrt());
        assert_eq!(boosted_sample(&items, 0.05, 3.0, 7), boosted_sample(&items, 0.05, 3.0, 7));
    }

    #[test]
    fn throughput_arithmetic() {
        let r = throughput_report(&[(600, Duration::from_millis(1200)), (400, Duration::from_millis(800))]);
        assert_eq!(r.records, 1000);
        assert!((r.tweets_per_sec - 500.0).abs() < 1e-9);
        assert_eq!(r.per_batch.len(), 2);
        let empty = throughput_report(&[]);
        assert_eq!((empty.records, empty.tweets_per_sec), (0, 0.0));
        assert_eq!(throughput_report(&[(5, Duration::ZERO)]).tweets_per_sec, 0.0);
    }
}
