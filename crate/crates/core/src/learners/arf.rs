//! Adaptive random forest: online bagging over Hoeffding trees restricted to
//! random feature subspaces, with per-member drift monitoring.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::hoeffding::{HoeffdingTree, HtReplica};
use super::{ArfParams, HtParams, SubspaceRule};
use crate::model::ClassDistribution;
use crate::util::mix;

impl SubspaceRule {
    pub fn size(self, m: usize) -> usize {
        match self {
            SubspaceRule::Sqrt => ((m as f64).sqrt().floor() as usize + 1).min(m),
            SubspaceRule::All => m,
            SubspaceRule::Fixed(k) => k.clamp(1, m.max(1)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftSignal {
    None,
    Warning,
    Drift,
}

/// Compares the error rate over a sliding window against the long-run rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftMonitor {
    window: VecDeque<bool>,
    window_errors: u32,
    capacity: usize,
    seen: u64,
    errors: u64,
}

impl DriftMonitor {
    pub fn new(capacity: usize) -> Self {
        Self { window: VecDeque::with_capacity(capacity), window_errors: 0, capacity: capacity.max(1), seen: 0, errors: 0 }
    }

    pub fn update(&mut self, error: bool, warning_sigma: f64, drift_sigma: f64) -> DriftSignal {
        self.seen += 1;
        self.errors += u64::from(error);
        self.window.push_back(error);
        self.window_errors += u32::from(error);
        if self.window.len() > self.capacity {
            self.window_errors -= u32::from(self.window.pop_front().unwrap_or(false));
        }
        if self.window.len() < self.capacity || self.seen < 2 * self.capacity as u64 {
            return DriftSignal::None;
        }
        let w = self.capacity as f64;
        let long = self.errors as f64 / self.seen as f64;
        let p = long.clamp(1.0 / w, 1.0 - 1.0 / w);
        let sigma = (p * (1.0 - p) / w).sqrt();
        let recent = self.window_errors as f64 / w;
        if recent > long + drift_sigma * sigma {
            DriftSignal::Drift
        } else if recent > long + warning_sigma * sigma {
            DriftSignal::Warning
        } else {
            DriftSignal::None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArfMember {
    tree: Arc<HoeffdingTree>,
    background: Option<Arc<HoeffdingTree>>,
    monitor: DriftMonitor,
    seed: u64,
    generation: u32,
    drifts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArfModel {
    params: ArfParams,
    ht: HtParams,
    num_classes: usize,
    num_features: usize,
    members: Vec<ArfMember>,
}

fn subspace(rule: SubspaceRule, m: usize, seed: u64, generation: u32, salt: u64) -> Vec<usize> {
    let k = rule.size(m);
    if k >= m {
        return (0..m).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[seed, u64::from(generation), salt, 0x5u64]));
    let mut v = sample(&mut rng, m, k).into_vec();
    v.sort_unstable();
    v
}

impl ArfModel {
    pub fn new(params: ArfParams, ht: HtParams, num_classes: usize, num_features: usize, seed: u64) -> Self {
        let members = (0..params.ensemble_size)
            .map(|i| {
                let mseed = mix(&[seed, i as u64, 0xA2F]);
                let cands = subspace(params.subspace, num_features, mseed, 0, 0);
                ArfMember {
                    tree: Arc::new(HoeffdingTree::new(ht.clone(), num_classes, cands)),
                    background: None,
                    monitor: DriftMonitor::new(params.drift_window),
                    seed: mseed,
                    generation: 0,
                    drifts: 0,
                }
            })
            .collect();
        Self { params, ht, num_classes, num_features, members }
    }

    pub fn members(&self) -> impl Iterator<Item = &HoeffdingTree> {
        self.members.iter().map(|m| m.tree.as_ref())
    }

    pub fn member_subspaces(&self) -> impl Iterator<Item = &[usize]> {
        self.members.iter().map(|m| m.tree.candidates())
    }

    pub fn drifts(&self) -> u32 {
        self.members.iter().map(|m| m.drifts).sum()
    }

    fn weight(&self, member: &ArfMember, seq: u64) -> f64 {
        instance_weight(&self.params, member.seed, member.generation, seq)
    }

    pub fn predict(&self, x: &[f64]) -> ClassDistribution {
        mean_distribution(self.num_classes, self.members.iter().map(|m| m.tree.predict(x)))
    }

    pub fn train(&mut self, x: &[f64], y: usize, seq: u64) {
        for i in 0..self.members.len() {
            let w = self.weight(&self.members[i], seq);
            let m = &mut self.members[i];
            let correct = m.tree.predict(x).argmax() == y;
            if w > 0.0 {
                Arc::make_mut(&mut m.tree).train(x, y, w);
                if let Some(bg) = m.background.as_mut() {
                    Arc::make_mut(bg).train(x, y, w);
                }
            }
            self.signal(i, !correct);
        }
    }

    fn signal(&mut self, i: usize, error: bool) -> bool {
        if !self.params.drift_detection {
            return false;
        }
        let (ws, ds) = (self.params.warning_sigma, self.params.drift_sigma);
        let sig = self.members[i].monitor.update(error, ws, ds);
        match sig {
            DriftSignal::None => false,
            DriftSignal::Warning => {
                if self.members[i].background.is_none() {
                    let fresh = self.fresh_tree(i, 1);
                    self.members[i].background = Some(Arc::new(fresh));
                }
                false
            }
            DriftSignal::Drift => {
                let replacement = match self.members[i].background.take() {
                    Some(bg) => bg,
                    None => Arc::new(self.fresh_tree(i, 1)),
                };
                let m = &mut self.members[i];
                m.tree = replacement;
                m.generation += 1;
                m.drifts += 1;
                m.monitor = DriftMonitor::new(self.params.drift_window);
                true
            }
        }
    }

    fn fresh_tree(&self, i: usize, ahead: u32) -> HoeffdingTree {
        let m = &self.members[i];
        let cands = subspace(self.params.subspace, self.num_features, m.seed, m.generation + ahead, 1);
        HoeffdingTree::new(self.ht.clone(), self.num_classes, cands)
    }

    pub fn fork(&self) -> ArfReplica {
        ArfReplica {
            params: self.params.clone(),
            num_classes: self.num_classes,
            members: self
                .members
                .iter()
                .map(|m| MemberReplica {
                    tree: HtReplica::new(m.tree.clone()),
                    background: m.background.clone().map(HtReplica::new),
                    seed: m.seed,
                    generation: m.generation,
                })
                .collect(),
            log: Vec::new(),
        }
    }

    /// Folds replica statistics member by member, then replays the
    /// per-instance correctness log in stream order through the monitors.
    pub fn merge(&mut self, replicas: Vec<ArfReplica>) {
        let mut tree_deltas: Vec<Vec<_>> = vec![Vec::new(); self.members.len()];
        let mut bg_deltas: Vec<Vec<_>> = vec![Vec::new(); self.members.len()];
        let mut log = Vec::new();
        for r in replicas {
            for (i, m) in r.members.into_iter().enumerate() {
                tree_deltas[i].push(m.tree.into_deltas());
                if let Some(bg) = m.background {
                    bg_deltas[i].push(bg.into_deltas());
                }
            }
            log.extend(r.log);
        }
        for (i, m) in self.members.iter_mut().enumerate() {
            Arc::make_mut(&mut m.tree).absorb(&tree_deltas[i]);
            if let Some(bg) = m.background.as_mut() {
                Arc::make_mut(bg).absorb(&bg_deltas[i]);
            }
        }
        log.sort_by_key(|(seq, _)| *seq);
        let mut replaced = vec![false; self.members.len()];
        for (_, errors) in log {
            for (i, &err) in errors.iter().enumerate() {
                if !replaced[i] && self.signal(i, err) {
                    // later entries describe the tree that was just replaced
                    replaced[i] = true;
                }
            }
        }
    }
}

pub(crate) fn mean_distribution(k: usize, dists: impl Iterator<Item = ClassDistribution>) -> ClassDistribution {
    let mut acc = vec![0.0; k];
    let mut n = 0usize;
    for d in dists {
        for (a, p) in acc.iter_mut().zip(d.probs()) {
            *a += p;
        }
        n += 1;
    }
    if n == 0 {
        return ClassDistribution::uniform(k);
    }
    ClassDistribution::from_weights(acc.into_iter().map(|a| a / n as f64).collect())
}

/// Training weight of one instance for one member; depends only on the
/// member's identity and the instance's stream position.
pub fn instance_weight(params: &ArfParams, member_seed: u64, generation: u32, seq: u64) -> f64 {
    if !params.resample {
        return 1.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[member_seed, u64::from(generation), seq]));
    match Poisson::new(params.poisson_lambda) {
        Ok(p) => p.sample(&mut rng),
        Err(_) => 0.0,
    }
}

#[derive(Debug, Clone)]
struct MemberReplica {
    tree: HtReplica,
    background: Option<HtReplica>,
    seed: u64,
    generation: u32,
}

#[derive(Debug, Clone)]
pub struct ArfReplica {
    params: ArfParams,
    num_classes: usize,
    members: Vec<MemberReplica>,
    log: Vec<(u64, Vec<bool>)>,
}

impl ArfReplica {
    pub fn predict(&self, x: &[f64]) -> ClassDistribution {
        mean_distribution(self.num_classes, self.members.iter().map(|m| m.tree.predict(x)))
    }

    pub fn train(&mut self, x: &[f64], y: usize, seq: u64) {
        let mut errors = Vec::with_capacity(self.members.len());
        for m in &mut self.members {
            errors.push(m.tree.predict(x).argmax() != y);
            let w = instance_weight(&self.params, m.seed, m.generation, seq);
            if w > 0.0 {
                m.tree.train(x, y, w);
                if let Some(bg) = m.background.as_mut() {
                    bg.train(x, y, w);
                }
            }
        }
        self.log.push((seq, errors));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subspace_sizes() {
        assert_eq!(SubspaceRule::Sqrt.size(16), 5);
        assert_eq!(SubspaceRule::Sqrt.size(1), 1);
        assert_eq!(SubspaceRule::All.size(16), 16);
        assert_eq!(SubspaceRule::Fixed(40).size(16), 16);
        let s = subspace(SubspaceRule::Sqrt, 16, 9, 0, 0);
        assert_eq!(s.len(), 5);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn zero_weights_leave_model_unchanged() {
        let params = ArfParams { poisson_lambda: 1e-12, ..Default::default() };
        let mut m = ArfModel::new(params, HtParams::default(), 2, 3, 1);
        let before = m.clone();
        for s in 0..50 {
            m.train(&[0.1, 0.2, s as f64], (s % 2) as usize, s);
        }
        for (a, b) in m.members().zip(before.members()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn untrained_three_class_is_uniform() {
        let m = ArfModel::new(ArfParams::default(), HtParams::default(), 3, 4, 0);
        for p in m.predict(&[0.0; 4]).probs() {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_of_members() {
        let d = mean_distribution(
            2,
            [ClassDistribution::from_weights(vec![0.8, 0.2]), ClassDistribution::from_weights(vec![0.6, 0.4])].into_iter(),
        );
        assert!((d.probs()[0] - 0.7).abs() < 1e-12 && (d.probs()[1] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn monitor_flags_error_burst() {
        let mut mon = DriftMonitor::new(100);
        for i in 0..1000 {
            assert_eq!(mon.update(i % 10 == 0, 2.0, 3.0), DriftSignal::None);
        }
        let mut saw_drift = false;
        for _ in 0..100 {
            if mon.update(true, 2.0, 3.0) == DriftSignal::Drift {
                saw_drift = true;
                break;
            }
        }
        assert!(saw_drift);
    }

    #[test]
    fn weights_depend_only_on_identity() {
        let p = ArfParams::default();
        assert_eq!(instance_weight(&p, 3, 0, 77), instance_weight(&p, 3, 0, 77));
        let mean: f64 = (0..20_000).map(|s| instance_weight(&p, 3, 0, s)).sum::<f64>() / 20_000.0;
        assert!((mean - 6.0).abs() < 0.1, "{mean}");
        let off = ArfParams { resample: false, ..p };
        assert_eq!(instance_weight(&off, 3, 0, 1), 1.0);
    }
}
