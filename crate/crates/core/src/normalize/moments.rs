use serde::{Deserialize, Serialize};

/// Weighted count, mean and sum of squared deviations, updated with the
/// Welford recurrence and combined with the parallel (Chan et al.) rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub weight: f64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn add(&mut self, x: f64, w: f64) {
        if w <= 0.0 {
            return;
        }
        let total = self.weight + w;
        let delta = x - self.mean;
        self.mean += delta * w / total;
        self.m2 += w * delta * (x - self.mean);
        self.weight = total;
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.weight <= 0.0 {
            return;
        }
        if self.weight <= 0.0 {
            *self = *other;
            return;
        }
        let total = self.weight + other.weight;
        let delta = other.mean - self.mean;
        self.mean += delta * other.weight / total;
        self.m2 += other.m2 + delta * delta * self.weight * other.weight / total;
        self.weight = total;
    }

    /// Unbiased sample variance; 0 with fewer than two observations.
    pub fn variance(&self) -> f64 {
        if self.weight > 1.0 {
            (self.m2 / (self.weight - 1.0)).max(0.0)
        } else {
            0.0
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn of(xs: &[f64]) -> Moments {
        let mut m = Moments::default();
        xs.iter().for_each(|&x| m.add(x, 1.0));
        m
    }

    #[test]
    fn one_two_three() {
        let m = of(&[1.0, 2.0, 3.0]);
        assert_eq!(m.weight, 3.0);
        assert_eq!(m.mean, 2.0);
        assert_eq!(m.variance(), 1.0);
    }

    #[test]
    fn single_point() {
        let m = of(&[4.5]);
        assert_eq!((m.mean, m.m2, m.variance()), (4.5, 0.0, 0.0));
    }

    #[test]
    fn permutations_agree() {
        let base = of(&[1.0, 2.0, 3.0]);
        for p in [[1.0, 3.0, 2.0], [2.0, 1.0, 3.0], [2.0, 3.0, 1.0], [3.0, 1.0, 2.0], [3.0, 2.0, 1.0]] {
            let m = of(&p);
            assert!((m.mean - base.mean).abs() < 1e-12 && (m.m2 - base.m2).abs() < 1e-12);
        }
    }

    #[test]
    fn merge_matches_concatenation() {
        let mut a = of(&[1.0, 2.0]);
        a.merge(&of(&[3.0]));
        let c = of(&[1.0, 2.0, 3.0]);
        assert!((a.mean - c.mean).abs() < 1e-12 && (a.m2 - c.m2).abs() < 1e-12 && a.weight == c.weight);

        let mut e = of(&[7.0, 9.0]);
        let before = e;
        e.merge(&Moments::default());
        assert_eq!(e, before);
    }

    #[test]
    fn weighted_add_equals_repeats() {
        let mut w = Moments::default();
        w.add(2.0, 3.0);
        w.add(5.0, 1.0);
        let r = of(&[2.0, 2.0, 2.0, 5.0]);
        assert!((w.mean - r.mean).abs() < 1e-12 && (w.m2 - r.m2).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn merge_is_symmetric(xs in proptest::collection::vec(-1e3f64..1e3, 1..50), ys in proptest::collection::vec(-1e3f64..1e3, 1..50)) {
            let (a, b) = (of(&xs), of(&ys));
            let mut ab = a; ab.merge(&b);
            let mut ba = b; ba.merge(&a);
            prop_assert!((ab.mean - ba.mean).abs() <= 1e-12 * (1.0 + ab.mean.abs()));
            prop_assert!((ab.m2 - ba.m2).abs() <= 1e-12 * (1.0 + ab.m2.abs()));
        }
    }
}
