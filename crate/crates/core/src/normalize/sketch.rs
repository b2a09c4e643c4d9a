//! Merging t-digest with the arcsine scale function.
//!
//! Values are buffered and folded into centroids in bulk. Two sketches merge by
//! pooling their centroids and compressing again, so per-worker sketches can be
//! combined at a micro-batch barrier.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

const DEFAULT_COMPRESSION: f64 = 200.0;
const BUFFER_FACTOR: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Centroid {
    mean: f64,
    weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileSketch {
    compression: f64,
    centroids: Vec<Centroid>,
    buffer: Vec<f64>,
    count: f64,
    min: f64,
    max: f64,
}

impl Default for QuantileSketch {
    fn default() -> Self {
        Self::new(DEFAULT_COMPRESSION)
    }
}

impl QuantileSketch {
    pub fn new(compression: f64) -> Self {
        Self {
            compression: compression.max(10.0),
            centroids: Vec::new(),
            buffer: Vec::new(),
            count: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }

    pub fn count(&self) -> f64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0.0
    }

    pub fn add(&mut self, x: f64) {
        if !x.is_finite() {
            return;
        }
        self.buffer.push(x);
        self.count += 1.0;
        self.min = self.min.min(x);
        self.max = self.max.max(x);
        if self.buffer.len() >= BUFFER_FACTOR * self.compression as usize {
            self.compress();
        }
    }

    pub fn merge(&mut self, other: &QuantileSketch) {
        if other.is_empty() {
            return;
        }
        self.centroids.extend_from_slice(&other.centroids);
        self.centroids.extend(other.buffer.iter().map(|&x| Centroid { mean: x, weight: 1.0 }));
        self.count += other.count;
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
        self.compress();
    }

    fn k_scale(&self, q: f64) -> f64 {
        self.compression / (2.0 * PI) * (2.0 * q.clamp(0.0, 1.0) - 1.0).asin()
    }

    fn compress(&mut self) {
        let mut all = std::mem::take(&mut self.centroids);
        all.extend(self.buffer.drain(..).map(|x| Centroid { mean: x, weight: 1.0 }));
        if all.is_empty() {
            return;
        }
        all.sort_by(|a, b| a.mean.total_cmp(&b.mean));
        let total: f64 = all.iter().map(|c| c.weight).sum();
        let mut out = Vec::with_capacity(self.compression as usize * 2);
        let mut cur = all[0];
        let mut left = 0.0;
        let mut k_left = self.k_scale(0.0);
        for c in &all[1..] {
            let q_right = (left + cur.weight + c.weight) / total;
            if self.k_scale(q_right) - k_left <= 1.0 {
                let w = cur.weight + c.weight;
                cur.mean += (c.mean - cur.mean) * c.weight / w;
                cur.weight = w;
            } else {
                left += cur.weight;
                k_left = self.k_scale(left / total);
                out.push(cur);
                cur = *c;
            }
        }
        out.push(cur);
        self.centroids = out;
    }

    /// Estimated `q`-quantile, `None` when empty.
    pub fn quantile(&self, q: f64) -> Option<f64> {
        if self.is_empty() {
            return None;
        }
        let mut cs = self.centroids.clone();
        if !self.buffer.is_empty() {
            cs.extend(self.buffer.iter().map(|&x| Centroid { mean: x, weight: 1.0 }));
            cs.sort_by(|a, b| a.mean.total_cmp(&b.mean));
        }
        let q = q.clamp(0.0, 1.0);
        if cs.len() == 1 {
            return Some(cs[0].mean);
        }
        let target = q * self.count;
        // centroid i is centred at cumulative weight cum_i + w_i / 2
        let mut cum = 0.0;
        let mut prev_center = 0.0;
        let mut prev_mean = self.min;
        for c in &cs {
            let center = cum + c.weight / 2.0;
            if target < center {
                let span = center - prev_center;
                let t = if span > 0.0 { (target - prev_center) / span } else { 0.0 };
                return Some(prev_mean + t * (c.mean - prev_mean));
            }
            prev_center = center;
            prev_mean = c.mean;
            cum += c.weight;
        }
        let span = self.count - prev_center;
        let t = if span > 0.0 { (target - prev_center) / span } else { 1.0 };
        Some(prev_mean + t * (self.max - prev_mean))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rank_error(sorted: &[f64], estimate: f64, q: f64) -> f64 {
        let below = sorted.partition_point(|&x| x < estimate) as f64;
        let upto = sorted.partition_point(|&x| x <= estimate) as f64;
        let n = sorted.len() as f64;
        let target = q * n;
        if target < below {
            (below - target) / n
        } else if target > upto {
            (target - upto) / n
        } else {
            0.0
        }
    }

    #[test]
    fn quartiles_within_one_percent_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = QuantileSketch::default();
        let mut xs: Vec<f64> = (0..100_000)
            .map(|_| {
                let u: f64 = rng.random();
                // skewed, heavy right tail
                (-u.ln()).powf(2.0) * 100.0
            })
            .collect();
        xs.iter().for_each(|&x| s.add(x));
        xs.sort_by(f64::total_cmp);
        for q in [0.01, 0.25, 0.5, 0.75, 0.99] {
            let e = rank_error(&xs, s.quantile(q).unwrap(), q);
            assert!(e <= 0.01, "q={q} rank error {e}");
        }
    }

    #[test]
    fn merged_sketches_keep_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<f64> = (0..40_000).map(|_| rng.random::<f64>() * 10.0).collect();
        let mut parts: Vec<QuantileSketch> = (0..8).map(|_| QuantileSketch::default()).collect();
        for (i, &x) in xs.iter().enumerate() {
            parts[i % 8].add(x);
        }
        let mut merged = QuantileSketch::default();
        parts.iter().for_each(|p| merged.merge(p));
        assert_eq!(merged.count(), 40_000.0);
        let mut sorted = xs.clone();
        sorted.sort_by(f64::total_cmp);
        for q in [0.25, 0.75] {
            assert!(rank_error(&sorted, merged.quantile(q).unwrap(), q) <= 0.01);
        }
    }

    #[test]
    fn tiny_inputs() {
        let mut s = QuantileSketch::default();
        assert_eq!(s.quantile(0.5), None);
        s.add(3.0);
        assert_eq!(s.quantile(0.25), Some(3.0));
        s.add(5.0);
        let q = s.quantile(0.5).unwrap();
        assert!((3.0..=5.0).contains(&q));
    }

    #[test]
    fn centroid_count_is_bounded() {
        let mut s = QuantileSketch::new(100.0);
        for i in 0..200_000 {
            s.add(i as f64);
        }
        s.compress();
        assert!(s.centroids.len() < 200, "{}", s.centroids.len());
    }
}
