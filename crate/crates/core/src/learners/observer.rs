use serde::{Deserialize, Serialize};

use crate::normalize::Moments;

/// Number of candidate thresholds evaluated per feature.
pub const NUM_CANDIDATES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ClassGaussian {
    moments: Moments,
    min: f64,
    max: f64,
}

impl Default for ClassGaussian {
    fn default() -> Self {
        Self { moments: Moments::default(), min: f64::INFINITY, max: f64::NEG_INFINITY }
    }
}

impl ClassGaussian {
    /// Weight of this class expected at or below `t`.
    fn weight_below(&self, t: f64) -> f64 {
        let w = self.moments.weight;
        if w <= 0.0 || t < self.min {
            return 0.0;
        }
        if t >= self.max {
            return w;
        }
        let sd = self.moments.std_dev();
        if sd <= 0.0 {
            return if t >= self.moments.mean { w } else { 0.0 };
        }
        let z = (t - self.moments.mean) / (sd * std::f64::consts::SQRT_2);
        w * 0.5 * (1.0 + libm::erf(z))
    }
}

/// Per-class Gaussian summary of one numeric feature at a leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianObserver {
    classes: Vec<ClassGaussian>,
}

impl GaussianObserver {
    pub fn new(num_classes: usize) -> Self {
        Self { classes: vec![ClassGaussian::default(); num_classes] }
    }

    pub fn observe(&mut self, value: f64, class: usize, weight: f64) {
        let c = &mut self.classes[class];
        c.moments.add(value, weight);
        c.min = c.min.min(value);
        c.max = c.max.max(value);
    }

    pub fn merge(&mut self, other: &GaussianObserver) {
        for (a, b) in self.classes.iter_mut().zip(&other.classes) {
            a.moments.merge(&b.moments);
            a.min = a.min.min(b.min);
            a.max = a.max.max(b.max);
        }
    }

    pub fn class_moments(&self, class: usize) -> &Moments {
        &self.classes[class].moments
    }

    pub fn class_range(&self, class: usize) -> (f64, f64) {
        (self.classes[class].min, self.classes[class].max)
    }

    /// Evenly spaced thresholds strictly inside the observed range.
    pub fn candidate_thresholds(&self) -> Vec<f64> {
        let lo = self.classes.iter().map(|c| c.min).fold(f64::INFINITY, f64::min);
        let hi = self.classes.iter().map(|c| c.max).fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            return Vec::new();
        }
        let step = (hi - lo) / (NUM_CANDIDATES + 1) as f64;
        (1..=NUM_CANDIDATES).map(|i| lo + step * i as f64).collect()
    }

    /// Estimated class weights on the `<= t` and `> t` sides.
    pub fn split_distributions(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        let left: Vec<f64> = self.classes.iter().map(|c| c.weight_below(t)).collect();
        let right = self.classes.iter().zip(&left).map(|(c, l)| (c.moments.weight - l).max(0.0)).collect();
        (left, right)
    }
}
