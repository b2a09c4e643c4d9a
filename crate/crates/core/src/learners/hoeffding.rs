//! Hoeffding tree over numeric features.
//!
//! Leaves keep class weights and one Gaussian observer per candidate feature.
//! A replica shares the tree read-only and records leaf-statistic deltas; the
//! deltas are folded back at a barrier and split attempts run there.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::observer::GaussianObserver;
use super::{HtParams, SplitCriterion};
use crate::model::ClassDistribution;

/// Bound on the difference between an observed mean and the true mean of a
/// variable with range `range` after `n` observations, with probability `1 - confidence`.
pub fn hoeffding_bound(range: f64, confidence: f64, n: f64) -> f64 {
    (range * range * (1.0 / confidence).ln() / (2.0 * n)).sqrt()
}

/// Laplace-smoothed class frequencies.
pub fn laplace(counts: &[f64]) -> ClassDistribution {
    let n: f64 = counts.iter().sum();
    let k = counts.len() as f64;
    ClassDistribution::from_weights(counts.iter().map(|c| (c + 1.0) / (n + k)).collect())
}

fn entropy(dist: &[f64]) -> f64 {
    let total: f64 = dist.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    -dist.iter().filter(|&&d| d > 0.0).map(|&d| {
        let p = d / total;
        p * p.log2()
    }).sum::<f64>()
}

fn gini(dist: &[f64]) -> f64 {
    let total: f64 = dist.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - dist.iter().map(|&d| (d / total).powi(2)).sum::<f64>()
}

const MIN_BRANCH_FRACTION: f64 = 0.01;

impl SplitCriterion {
    fn impurity(self, dist: &[f64]) -> f64 {
        match self {
            SplitCriterion::InfoGain => entropy(dist),
            SplitCriterion::Gini => gini(dist),
        }
    }

    /// Merit of splitting `pre` into `branches`; `None` when fewer than two
    /// branches carry a meaningful share of the weight.
    pub fn merit(self, pre: &[f64], branches: &[&[f64]]) -> Option<f64> {
        let total: f64 = pre.iter().sum();
        let weights: Vec<f64> = branches.iter().map(|b| b.iter().sum()).collect();
        if weights.iter().filter(|&&w| w > MIN_BRANCH_FRACTION * total).count() < 2 {
            return None;
        }
        let wsum: f64 = weights.iter().sum();
        let after: f64 = branches.iter().zip(&weights).map(|(b, w)| w / wsum * self.impurity(b)).sum();
        Some(self.impurity(pre) - after)
    }

    pub fn range(self, num_classes: usize) -> f64 {
        match self {
            SplitCriterion::InfoGain => (num_classes.max(2) as f64).log2(),
            SplitCriterion::Gini => 1.0,
        }
    }
}

/// Sufficient statistics at a leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafStats {
    pub class_counts: Vec<f64>,
    pub observers: Vec<GaussianObserver>,
    pub weight_since_attempt: f64,
}

impl LeafStats {
    pub fn new(num_classes: usize, num_candidates: usize) -> Self {
        Self {
            class_counts: vec![0.0; num_classes],
            observers: vec![GaussianObserver::new(num_classes); num_candidates],
            weight_since_attempt: 0.0,
        }
    }

    pub fn total(&self) -> f64 {
        self.class_counts.iter().sum()
    }

    fn observe(&mut self, x: &[f64], y: usize, w: f64, candidates: &[usize]) {
        self.class_counts[y] += w;
        self.weight_since_attempt += w;
        for (obs, &f) in self.observers.iter_mut().zip(candidates) {
            obs.observe(x[f], y, w);
        }
    }

    pub fn merge(&mut self, other: &LeafStats) {
        for (a, b) in self.class_counts.iter_mut().zip(&other.class_counts) {
            *a += b;
        }
        for (a, b) in self.observers.iter_mut().zip(&other.observers) {
            a.merge(b);
        }
        self.weight_since_attempt += other.weight_since_attempt;
    }

    fn is_pure(&self) -> bool {
        self.class_counts.iter().filter(|&&c| c > 0.0).count() < 2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { stats: LeafStats, depth: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    merit: f64,
    slot: usize,
    threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoeffdingTree {
    params: HtParams,
    num_classes: usize,
    /// Feature positions eligible for splits.
    candidates: Vec<usize>,
    nodes: Vec<Node>,
    /// Leaf weight thrown away when leaves were replaced by splits.
    discarded_weight: f64,
}

impl HoeffdingTree {
    pub fn new(params: HtParams, num_classes: usize, candidates: Vec<usize>) -> Self {
        let root = Node::Leaf { stats: LeafStats::new(num_classes, candidates.len()), depth: 0 };
        Self { params, num_classes, candidates, nodes: vec![root], discarded_weight: 0.0 }
    }

    pub fn params(&self) -> &HtParams {
        &self.params
    }

    /// Replaces the growth parameters; the current structure is kept.
    pub fn set_params(&mut self, params: HtParams) {
        self.params = params;
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn candidates(&self) -> &[usize] {
        &self.candidates
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> u32 {
        self.nodes.iter().filter_map(|n| if let Node::Leaf { depth, .. } = n { Some(*depth) } else { None }).max().unwrap_or(0)
    }

    pub fn discarded_weight(&self) -> f64 {
        self.discarded_weight
    }

    /// Root split as `(feature position, threshold)`, if the root has split.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match self.nodes[0] {
            Node::Split { feature, threshold, .. } => Some((feature, threshold)),
            Node::Leaf { .. } => None,
        }
    }

    /// Leaves as `(node index, stats, depth)` in node order.
    pub fn leaves(&self) -> impl Iterator<Item = (usize, &LeafStats, u32)> {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match n {
            Node::Leaf { stats, depth } => Some((i, stats, *depth)),
            Node::Split { .. } => None,
        })
    }

    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
                Node::Leaf { .. } => return i,
            }
        }
    }

    pub fn leaf_stats(&self, idx: usize) -> Option<&LeafStats> {
        match self.nodes.get(idx) {
            Some(Node::Leaf { stats, .. }) => Some(stats),
            _ => None,
        }
    }

    fn leaf_mut(&mut self, idx: usize) -> &mut LeafStats {
        match &mut self.nodes[idx] {
            Node::Leaf { stats, .. } => stats,
            Node::Split { .. } => panic!("node {idx} is not a leaf"),
        }
    }

    pub fn predict(&self, x: &[f64]) -> ClassDistribution {
        let idx = self.leaf_index(x);
        laplace(&self.leaf_stats(idx).expect("routing ends at a leaf").class_counts)
    }

    /// Updates leaf statistics and attempts a split when the grace period elapsed.
    pub fn train(&mut self, x: &[f64], y: usize, weight: f64) {
        let idx = self.train_deferred(x, y, weight);
        let due = self.leaf_stats(idx).is_some_and(|s| s.weight_since_attempt >= self.params.grace_period as f64);
        if due {
            self.attempt_split(idx);
        }
    }

    /// Updates leaf statistics only; returns the leaf index.
    pub fn train_deferred(&mut self, x: &[f64], y: usize, weight: f64) -> usize {
        let idx = self.leaf_index(x);
        let candidates = std::mem::take(&mut self.candidates);
        self.leaf_mut(idx).observe(x, y, weight, &candidates);
        self.candidates = candidates;
        idx
    }

    /// Folds replica deltas into the leaves (in iteration order), then runs
    /// due split attempts once per touched leaf in index order.
    pub fn absorb<'a>(&mut self, deltas: impl IntoIterator<Item = &'a BTreeMap<usize, LeafStats>>) {
        let mut touched = BTreeSet::new();
        for d in deltas {
            for (&idx, stats) in d {
                self.leaf_mut(idx).merge(stats);
                touched.insert(idx);
            }
        }
        let grace = self.params.grace_period as f64;
        for idx in touched {
            if self.leaf_stats(idx).is_some_and(|s| s.weight_since_attempt >= grace) {
                self.attempt_split(idx);
            }
        }
    }

    fn best_candidates(&self, stats: &LeafStats) -> Vec<Candidate> {
        let crit = self.params.split_criterion;
        let mut out = Vec::with_capacity(stats.observers.len());
        for (slot, obs) in stats.observers.iter().enumerate() {
            let mut best: Option<Candidate> = None;
            for t in obs.candidate_thresholds() {
                let (l, r) = obs.split_distributions(t);
                if let Some(merit) = crit.merit(&stats.class_counts, &[&l, &r]) {
                    if best.is_none_or(|b| merit > b.merit) {
                        best = Some(Candidate { merit, slot, threshold: t });
                    }
                }
            }
            out.extend(best);
        }
        out
    }

    /// Returns whether the leaf was split.
    pub fn attempt_split(&mut self, idx: usize) -> bool {
        let (depth, stats) = match &mut self.nodes[idx] {
            Node::Leaf { stats, depth } => {
                stats.weight_since_attempt = 0.0;
                (*depth, stats.clone())
            }
            Node::Split { .. } => return false,
        };
        if depth >= self.params.max_depth || stats.is_pure() {
            return false;
        }
        let mut cands = self.best_candidates(&stats);
        // stable sort keeps the lower feature slot first on equal merit
        cands.sort_by(|a, b| b.merit.total_cmp(&a.merit));
        let Some(best) = cands.first().copied() else { return false };
        let second = cands.get(1).map_or(0.0, |c| c.merit).max(0.0);
        let n = stats.total();
        let eps = hoeffding_bound(self.params.split_criterion.range(self.num_classes), self.params.split_confidence, n);
        if best.merit <= 0.0 || !(best.merit - second > eps || eps < self.params.tie_threshold) {
            return false;
        }
        let (left, right) = (self.nodes.len(), self.nodes.len() + 1);
        let fresh = || Node::Leaf { stats: LeafStats::new(self.num_classes, self.candidates.len()), depth: depth + 1 };
        let children = [fresh(), fresh()];
        self.nodes.extend(children);
        self.nodes[idx] = Node::Split { feature: self.candidates[best.slot], threshold: best.threshold, left, right };
        self.discarded_weight += n;
        true
    }
}

/// Deferred-split view of a shared tree.
#[derive(Debug, Clone)]
pub struct HtReplica {
    base: Arc<HoeffdingTree>,
    deltas: BTreeMap<usize, LeafStats>,
}

impl HtReplica {
    pub fn new(base: Arc<HoeffdingTree>) -> Self {
        Self { base, deltas: BTreeMap::new() }
    }

    pub fn base(&self) -> &HoeffdingTree {
        &self.base
    }

    pub fn predict(&self, x: &[f64]) -> ClassDistribution {
        let idx = self.base.leaf_index(x);
        let base = &self.base.leaf_stats(idx).expect("routing ends at a leaf").class_counts;
        match self.deltas.get(&idx) {
            None => laplace(base),
            Some(d) => laplace(&base.iter().zip(&d.class_counts).map(|(a, b)| a + b).collect::<Vec<_>>()),
        }
    }

    pub fn train(&mut self, x: &[f64], y: usize, weight: f64) {
        let idx = self.base.leaf_index(x);
        let k = self.base.num_classes;
        let cands = &self.base.candidates;
        self.deltas.entry(idx).or_insert_with(|| LeafStats::new(k, cands.len())).observe(x, y, weight, cands);
    }

    pub fn deltas(&self) -> &BTreeMap<usize, LeafStats> {
        &self.deltas
    }

    pub fn into_deltas(self) -> BTreeMap<usize, LeafStats> {
        self.deltas
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tree(params: HtParams, m: usize) -> HoeffdingTree {
        HoeffdingTree::new(params, 2, (0..m).collect())
    }

    #[test]
    fn bound_closed_form() {
        assert!((hoeffding_bound(1.0, 0.01, 200.0) - 0.107_298_7).abs() < 1e-6);
        assert_eq!(hoeffding_bound(1.0, 1.0, 50.0), 0.0);
        let a = hoeffding_bound(1.0, 0.05, 100.0);
        assert!((hoeffding_bound(1.0, 0.05, 400.0) - a / 2.0).abs() < 1e-15);
    }

    #[test]
    fn merit_examples() {
        let pre = [10.0, 10.0];
        assert!((SplitCriterion::InfoGain.merit(&pre, &[&[10.0, 0.0], &[0.0, 10.0]]).unwrap() - 1.0).abs() < 1e-12);
        assert!((SplitCriterion::Gini.merit(&pre, &[&[10.0, 0.0], &[0.0, 10.0]]).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(SplitCriterion::InfoGain.merit(&pre, &[&[10.0, 10.0], &[0.0, 0.0]]), None);
    }

    #[test]
    fn untrained_is_uniform_and_laplace() {
        let mut t = tree(HtParams::default(), 1);
        assert_eq!(t.predict(&[0.3]).probs(), &[0.5, 0.5]);
        for _ in 0..10 {
            t.train(&[0.3], 0, 1.0);
        }
        assert_eq!(t.leaf_stats(0).unwrap().class_counts, vec![10.0, 0.0]);
        assert!((t.predict(&[0.3]).probs()[0] - 11.0 / 12.0).abs() < 1e-12);
        assert_eq!(t.num_nodes(), 1);
    }

    fn threshold_stream(t: &mut HoeffdingTree, n: usize, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..n {
            let x = [rng.random::<f64>(), rng.random::<f64>()];
            t.train(&x, usize::from(x[0] > 0.5), 1.0);
        }
    }

    #[test]
    fn learns_threshold_on_informative_feature() {
        let mut t = tree(HtParams::default(), 2);
        threshold_stream(&mut t, 5000, 7);
        let (f, thr) = t.root_split().expect("root splits");
        assert_eq!(f, 0);
        assert!(thr > 0.4 && thr < 0.6, "{thr}");
    }

    #[test]
    fn depth_cap_zero_keeps_single_leaf() {
        let mut t = tree(HtParams { max_depth: 0, ..Default::default() }, 2);
        threshold_stream(&mut t, 3000, 1);
        assert_eq!(t.num_nodes(), 1);
    }

    #[test]
    fn counts_are_conserved() {
        let mut t = tree(HtParams { grace_period: 50, ..Default::default() }, 2);
        threshold_stream(&mut t, 4000, 3);
        assert!(t.num_leaves() > 1);
        let in_leaves: f64 = t.leaves().map(|(_, s, _)| s.total()).sum();
        assert_eq!(in_leaves + t.discarded_weight(), 4000.0);
        assert!(t.depth() <= t.params().max_depth);
    }

    #[test]
    fn replica_is_isolated_and_deferred() {
        let mut t = tree(HtParams { grace_period: 20, ..Default::default() }, 2);
        threshold_stream(&mut t, 500, 2);
        let base = Arc::new(t);
        let mut r = HtReplica::new(base.clone());
        let x = [0.9, 0.1];
        assert_eq!(r.predict(&x), base.predict(&x));
        let nodes = base.num_nodes();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let x = [rng.random::<f64>(), rng.random::<f64>()];
            r.train(&x, usize::from(x[0] > 0.5), 1.0);
        }
        assert_eq!(r.base().num_nodes(), nodes);
        assert_eq!(Arc::strong_count(&base), 2);
        let total: f64 = r.deltas().values().map(LeafStats::total).sum();
        assert_eq!(total, 1000.0);
    }
}
