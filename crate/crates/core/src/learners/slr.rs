//! One-vs-rest logistic regression trained by constant-step SGD.

use serde::{Deserialize, Serialize};

use super::{Regularizer, SlrParams};
use crate::model::ClassDistribution;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn dot(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// Regularized log-loss of one head on one example.
pub fn loss(w: &[f64], b: f64, x: &[f64], y: f64, reg: Regularizer, strength: f64) -> f64 {
    let z = dot(w, x) + b;
    // log(1 + e^z) - y z, computed stably
    let data = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() } - y * z;
    let penalty = match reg {
        Regularizer::Zero => 0.0,
        Regularizer::L1 => strength * w.iter().map(|v| v.abs()).sum::<f64>(),
        Regularizer::L2 => 0.5 * strength * w.iter().map(|v| v * v).sum::<f64>(),
    };
    data + penalty
}

/// Gradient of [`loss`] with respect to `(w, b)`.
pub fn gradient(w: &[f64], b: f64, x: &[f64], y: f64, reg: Regularizer, strength: f64) -> (Vec<f64>, f64) {
    let err = sigmoid(dot(w, x) + b) - y;
    let gw = w
        .iter()
        .zip(x)
        .map(|(&wi, &xi)| {
            let r = match reg {
                Regularizer::Zero => 0.0,
                Regularizer::L1 => strength * wi.signum() * f64::from(u8::from(wi != 0.0)),
                Regularizer::L2 => strength * wi,
            };
            err * xi + r
        })
        .collect();
    (gw, err)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlrModel {
    params: SlrParams,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    instances_seen: u64,
}

impl SlrModel {
    pub fn new(params: SlrParams, num_classes: usize, num_features: usize) -> Self {
        Self { params, weights: vec![vec![0.0; num_features]; num_classes], bias: vec![0.0; num_classes], instances_seen: 0 }
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn instances_seen(&self) -> u64 {
        self.instances_seen
    }

    pub fn predict(&self, x: &[f64]) -> ClassDistribution {
        ClassDistribution::from_weights(self.weights.iter().zip(&self.bias).map(|(w, b)| sigmoid(dot(w, x) + b)).collect())
    }

    pub fn train(&mut self, x: &[f64], y: usize) {
        let p = &self.params;
        for (c, (w, b)) in self.weights.iter_mut().zip(self.bias.iter_mut()).enumerate() {
            let target = if c == y { 1.0 } else { 0.0 };
            let (gw, gb) = gradient(w, *b, x, target, p.regularizer, p.regularization);
            for (wi, g) in w.iter_mut().zip(gw) {
                *wi -= p.learning_rate * g;
            }
            *b -= p.learning_rate * gb;
        }
        self.instances_seen += 1;
    }

    pub fn fork(&self) -> SlrReplica {
        SlrReplica { model: self.clone(), trained: 0 }
    }

    /// Instance-count weighted average of replica parameters.
    pub fn merge(&mut self, replicas: &[SlrReplica]) {
        let total: u64 = replicas.iter().map(|r| r.trained).sum();
        if total == 0 {
            return;
        }
        let n = total as f64;
        for (c, (w, b)) in self.weights.iter_mut().zip(self.bias.iter_mut()).enumerate() {
            w.iter_mut().for_each(|v| *v = 0.0);
            *b = 0.0;
            for r in replicas.iter().filter(|r| r.trained > 0) {
                let share = r.trained as f64 / n;
                for (a, v) in w.iter_mut().zip(&r.model.weights[c]) {
                    *a += share * v;
                }
                *b += share * r.model.bias[c];
            }
        }
        self.instances_seen += total;
    }
}

#[derive(Debug, Clone)]
pub struct SlrReplica {
    model: SlrModel,
    trained: u64,
}

impl SlrReplica {
    pub fn predict(&self, x: &[f64]) -> ClassDistribution {
        self.model.predict(x)
    }

    pub fn train(&mut self, x: &[f64], y: usize) {
        self.model.train(x, y);
        self.trained += 1;
    }

    pub fn trained(&self) -> u64 {
        self.trained
    }

    pub fn model(&self) -> &SlrModel {
        &self.model
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(reg: Regularizer, strength: f64) -> SlrParams {
        SlrParams { learning_rate: 0.1, regularizer: reg, regularization: strength }
    }

    #[test]
    fn single_hand_step() {
        let mut m = SlrModel::new(params(Regularizer::Zero, 0.0), 2, 1);
        m.train(&[1.0], 1);
        // head 1: target 1, p = 0.5
        assert!((m.weights()[1][0] - 0.05).abs() < 1e-15);
        assert!((m.bias()[1] - 0.05).abs() < 1e-15);
        assert!((m.weights()[0][0] + 0.05).abs() < 1e-15);
    }

    #[test]
    fn zero_input_only_moves_bias_and_shrinks() {
        let mut m = SlrModel::new(params(Regularizer::L2, 0.01), 2, 2);
        m.weights[0] = vec![1.0, -2.0];
        m.train(&[0.0, 0.0], 0);
        assert!((m.weights()[0][0] - (1.0 - 0.1 * 0.01)).abs() < 1e-15);
        assert!((m.weights()[0][1] - (-2.0 + 0.1 * 0.02)).abs() < 1e-15);
        assert!(m.bias()[0] > 0.0);
    }

    #[test]
    fn untrained_is_uniform() {
        let m = SlrModel::new(SlrParams::default(), 3, 4);
        for p in m.predict(&[1.0, 2.0, 3.0, 4.0]).probs() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn symmetric_heads_normalize_to_sigmoid() {
        for z in [-3.0, -0.5, 0.0, 1.7, 9.0] {
            let d = ClassDistribution::from_weights(vec![sigmoid(z), sigmoid(-z)]);
            assert!((d.probs()[0] - sigmoid(z)).abs() < 1e-9);
            assert!((d.probs()[1] - (1.0 - sigmoid(z))).abs() < 1e-9);
        }
    }

    #[test]
    fn merge_weighted_average() {
        let mut g = SlrModel::new(SlrParams::default(), 2, 2);
        let mut a = g.fork();
        let mut b = g.fork();
        for _ in 0..3 {
            a.train(&[1.0, 0.0], 0);
        }
        b.train(&[0.0, 1.0], 1);
        let expected: Vec<f64> =
            (0..2).map(|i| 0.75 * a.model().weights()[1][i] + 0.25 * b.model().weights()[1][i]).collect();
        g.merge(&[a.clone(), b]);
        for i in 0..2 {
            assert!((g.weights()[1][i] - expected[i]).abs() < 1e-12);
        }
        assert_eq!(g.instances_seen(), 4);

        let mut solo = SlrModel::new(SlrParams::default(), 2, 2);
        solo.merge(&[a.clone()]);
        assert_eq!(solo.weights(), a.model().weights());

        let before = solo.clone();
        solo.merge(&[before.fork(), before.fork()]);
        assert_eq!(solo, before);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let w = [0.3, -1.2, 0.8];
        let x = [1.5, 0.2, -0.7];
        for reg in [Regularizer::Zero, Regularizer::L1, Regularizer::L2] {
            let (gw, gb) = gradient(&w, 0.1, &x, 1.0, reg, 0.05);
            let h = 1e-6;
            for i in 0..3 {
                let (mut p, mut m) = (w, w);
                p[i] += h;
                m[i] -= h;
                let num = (loss(&p, 0.1, &x, 1.0, reg, 0.05) - loss(&m, 0.1, &x, 1.0, reg, 0.05)) / (2.0 * h);
                assert!((num - gw[i]).abs() <= 1e-5 * num.abs().max(1e-3));
            }
            let num = (loss(&w, 0.1 + h, &x, 1.0, reg, 0.05) - loss(&w, 0.1 - h, &x, 1.0, reg, 0.05)) / (2.0 * h);
            assert!((num - gb).abs() < 1e-6);
        }
    }
}
