//! Incremental classifiers behind one contract: train, predict, fork a
//! replica, merge replicas back, and (de)serialize.

pub mod arf;
mod codec;
pub mod hoeffding;
pub mod observer;
pub mod slr;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use arf::{ArfModel, ArfReplica};
pub use codec::{DecodeError, FORMAT_VERSION};
pub use hoeffding::{hoeffding_bound, HoeffdingTree, HtReplica, LeafStats};
pub use slr::{SlrModel, SlrReplica};

use crate::model::ClassDistribution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    #[default]
    Ht,
    Arf,
    Slr,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] = [ClassifierKind::Ht, ClassifierKind::Arf, ClassifierKind::Slr];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::Ht => "ht",
            ClassifierKind::Arf => "arf",
            ClassifierKind::Slr => "slr",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassifierKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ht" | "hoeffding" => Ok(ClassifierKind::Ht),
            "arf" => Ok(ClassifierKind::Arf),
            "slr" | "lr" => Ok(ClassifierKind::Slr),
            other => Err(format!("unknown classifier `{other}` (expected ht, arf or slr)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitCriterion {
    Gini,
    #[default]
    #[serde(alias = "infogain")]
    InfoGain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HtParams {
    pub split_criterion: SplitCriterion,
    pub split_confidence: f64,
    pub tie_threshold: f64,
    pub grace_period: u64,
    pub max_depth: u32,
}

impl Default for HtParams {
    fn default() -> Self {
        Self { split_criterion: SplitCriterion::InfoGain, split_confidence: 0.01, tie_threshold: 0.05, grace_period: 200, max_depth: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubspaceRule {
    /// `floor(sqrt(M)) + 1` features.
    #[default]
    Sqrt,
    All,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArfParams {
    pub ensemble_size: usize,
    pub subspace: SubspaceRule,
    /// When false every member trains on each instance exactly once.
    pub resample: bool,
    pub poisson_lambda: f64,
    pub drift_detection: bool,
    pub drift_window: usize,
    pub warning_sigma: f64,
    pub drift_sigma: f64,
}

impl Default for ArfParams {
    fn default() -> Self {
        Self {
            ensemble_size: 10,
            subspace: SubspaceRule::Sqrt,
            resample: true,
            poisson_lambda: 6.0,
            drift_detection: true,
            drift_window: 500,
            warning_sigma: 2.0,
            drift_sigma: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regularizer {
    #[serde(alias = "none")]
    Zero,
    L1,
    #[default]
    L2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlrParams {
    pub learning_rate: f64,
    pub regularizer: Regularizer,
    pub regularization: f64,
}

impl Default for SlrParams {
    fn default() -> Self {
        Self { learning_rate: 0.1, regularizer: Regularizer::L2, regularization: 0.01 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerParams {
    pub ht: HtParams,
    pub arf: ArfParams,
    pub slr: SlrParams,
}

impl LearnerParams {
    pub fn validate(&self) -> Result<(), LearnerError> {
        let bad = |m: &str| Err(LearnerError::Param(m.to_string()));
        let h = &self.ht;
        if !(h.split_confidence > 0.0 && h.split_confidence < 1.0) {
            return bad("split_confidence must lie in (0, 1)");
        }
        if !(h.tie_threshold > 0.0) {
            return bad("tie_threshold must be positive");
        }
        if h.grace_period == 0 {
            return bad("grace_period must be at least 1");
        }
        let a = &self.arf;
        if a.ensemble_size == 0 {
            return bad("ensemble_size must be at least 1");
        }
        if a.resample && !(a.poisson_lambda > 0.0 && a.poisson_lambda.is_finite()) {
            return bad("poisson_lambda must be positive");
        }
        if a.drift_window == 0 || !(a.drift_sigma >= a.warning_sigma && a.warning_sigma > 0.0) {
            return bad("drift monitor needs a window >= 1 and 0 < warning_sigma <= drift_sigma");
        }
        if let SubspaceRule::Fixed(0) = a.subspace {
            return bad("fixed subspace size must be at least 1");
        }
        let s = &self.slr;
        if !(s.learning_rate > 0.0 && s.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(s.regularization >= 0.0 && s.regularization.is_finite()) {
            return bad("regularization must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LearnerError {
    #[error("invalid learner parameter: {0}")]
    Param(String),
    #[error("class index {label} outside a {classes}-class scheme")]
    Label { label: usize, classes: usize },
    #[error("feature vector has {got} values, model expects {expected}")]
    Dimension { got: usize, expected: usize },
    #[error("feature vector contains a non-finite value")]
    NonFinite,
    #[error("replica forked from model version {replica}, global model is at {global}")]
    VersionMismatch { replica: u64, global: u64 },
    #[error("replica kind does not match the model")]
    KindMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Learner {
    Ht(Arc<HoeffdingTree>),
    Arf(ArfModel),
    Slr(SlrModel),
}

/// A global classifier: published read-only between barriers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    num_classes: usize,
    num_features: usize,
    version: u64,
    learner: Learner,
}

#[derive(Debug, Clone)]
enum ReplicaLearner {
    Ht(HtReplica),
    Arf(ArfReplica),
    Slr(SlrReplica),
}

/// Single-owner working copy trained by one worker during a micro-batch.
#[derive(Debug, Clone)]
pub struct Replica {
    version: u64,
    num_classes: usize,
    num_features: usize,
    trained: u64,
    learner: ReplicaLearner,
}

fn check(x: &[f64], y: Option<usize>, features: usize, classes: usize) -> Result<(), LearnerError> {
    if x.len() != features {
        return Err(LearnerError::Dimension { got: x.len(), expected: features });
    }
    if let Some(label) = y {
        if label >= classes {
            return Err(LearnerError::Label { label, classes });
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LearnerError::NonFinite);
    }
    Ok(())
}

impl Model {
    pub fn new(
        kind: ClassifierKind,
        params: &LearnerParams,
        num_classes: usize,
        num_features: usize,
        seed: u64,
    ) -> Result<Self, LearnerError> {
        params.validate()?;
        if num_classes < 2 {
            return Err(LearnerError::Param("at least two classes are required".into()));
        }
        if num_features == 0 {
            return Err(LearnerError::Param("at least one feature is required".into()));
        }
        let learner = match kind {
            ClassifierKind::Ht => {
                Learner::Ht(Arc::new(HoeffdingTree::new(params.ht.clone(), num_classes, (0..num_features).collect())))
            }
            ClassifierKind::Arf => {
                Learner::Arf(ArfModel::new(params.arf.clone(), params.ht.clone(), num_classes, num_features, seed))
            }
            ClassifierKind::Slr => Learner::Slr(SlrModel::new(params.slr.clone(), num_classes, num_features)),
        };
        Ok(Self { num_classes, num_features, version: 0, learner })
    }

    pub fn kind(&self) -> ClassifierKind {
        match self.learner {
            Learner::Ht(_) => ClassifierKind::Ht,
            Learner::Arf(_) => ClassifierKind::Arf,
            Learner::Slr(_) => ClassifierKind::Slr,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    /// Number of merges that changed the model.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn as_tree(&self) -> Option<&HoeffdingTree> {
        match &self.learner {
            Learner::Ht(t) => Some(t),
            _ => None,
        }
    }

    pub fn as_forest(&self) -> Option<&ArfModel> {
        match &self.learner {
            Learner::Arf(f) => Some(f),
            _ => None,
        }
    }

    pub fn as_slr(&self) -> Option<&SlrModel> {
        match &self.learner {
            Learner::Slr(m) => Some(m),
            _ => None,
        }
    }

    /// Class distribution; a vector of the wrong length yields uniform.
    pub fn predict(&self, x: &[f64]) -> ClassDistribution {
        if x.len() != self.num_features {
            return ClassDistribution::uniform(self.num_classes);
        }
        match &self.learner {
            Learner::Ht(t) => t.predict(x),
            Learner::Arf(f) => f.predict(x),
            Learner::Slr(m) => m.predict(x),
        }
    }

    /// Sequential training with immediate splits. `seq` is the instance's
    /// stream position (drives ensemble resampling).
    pub fn train(&mut self, x: &[f64], y: usize, seq: u64) -> Result<(), LearnerError> {
        check(x, Some(y), self.num_features, self.num_classes)?;
        match &mut self.learner {
            Learner::Ht(t) => Arc::make_mut(t).train(x, y, 1.0),
            Learner::Arf(f) => f.train(x, y, seq),
            Learner::Slr(m) => m.train(x, y),
        }
        Ok(())
    }

    pub fn fork(&self) -> Replica {
        let learner = match &self.learner {
            Learner::Ht(t) => ReplicaLearner::Ht(HtReplica::new(t.clone())),
            Learner::Arf(f) => ReplicaLearner::Arf(f.fork()),
            Learner::Slr(m) => ReplicaLearner::Slr(m.fork()),
        };
        Replica { version: self.version, num_classes: self.num_classes, num_features: self.num_features, trained: 0, learner }
    }

    /// Folds replicas (in the given order) into the model. The version
    /// advances only if some replica trained.
    pub fn merge(&mut self, replicas: Vec<Replica>) -> Result<u64, LearnerError> {
        for r in &replicas {
            if r.version != self.version {
                return Err(LearnerError::VersionMismatch { replica: r.version, global: self.version });
            }
            if std::mem::discriminant(&self.kind()) != std::mem::discriminant(&r.kind()) {
                return Err(LearnerError::KindMismatch);
            }
        }
        let trained: u64 = replicas.iter().map(|r| r.trained).sum();
        if trained == 0 {
            return Ok(0);
        }
        match &mut self.learner {
            Learner::Ht(t) => {
                let deltas: Vec<_> = replicas
                    .into_iter()
                    .map(|r| match r.learner {
                        ReplicaLearner::Ht(h) => h.into_deltas(),
                        _ => unreachable!("kind checked above"),
                    })
                    .collect();
                Arc::make_mut(t).absorb(&deltas);
            }
            Learner::Arf(f) => f.merge(
                replicas
                    .into_iter()
                    .map(|r| match r.learner {
                        ReplicaLearner::Arf(a) => a,
                        _ => unreachable!("kind checked above"),
                    })
                    .collect(),
            ),
            Learner::Slr(m) => {
                let reps: Vec<SlrReplica> = replicas
                    .into_iter()
                    .map(|r| match r.learner {
                        ReplicaLearner::Slr(s) => s,
                        _ => unreachable!("kind checked above"),
                    })
                    .collect();
                m.merge(&reps);
            }
        }
        self.version += 1;
        Ok(trained)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        codec::encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        codec::decode(bytes)
    }

    /// Hash of the serialized model.
    pub fn fingerprint(&self) -> u64 {
        crate::util::fnv1a(&self.to_bytes())
    }
}

impl Replica {
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn trained(&self) -> u64 {
        self.trained
    }

    pub fn kind(&self) -> ClassifierKind {
        match self.learner {
            ReplicaLearner::Ht(_) => ClassifierKind::Ht,
            ReplicaLearner::Arf(_) => ClassifierKind::Arf,
            ReplicaLearner::Slr(_) => ClassifierKind::Slr,
        }
    }

    pub fn as_tree_replica(&self) -> Option<&HtReplica> {
        match &self.learner {
            ReplicaLearner::Ht(h) => Some(h),
            _ => None,
        }
    }

    pub fn predict(&self, x: &[f64]) -> ClassDistribution {
        if x.len() != self.num_features {
            return ClassDistribution::uniform(self.num_classes);
        }
        match &self.learner {
            ReplicaLearner::Ht(t) => t.predict(x),
            ReplicaLearner::Arf(f) => f.predict(x),
            ReplicaLearner::Slr(m) => m.predict(x),
        }
    }

    /// Deferred-split training: tree structure never changes here.
    pub fn train(&mut self, x: &[f64], y: usize, seq: u64) -> Result<(), LearnerError> {
        check(x, Some(y), self.num_features, self.num_classes)?;
        match &mut self.learner {
            ReplicaLearner::Ht(t) => t.train(x, y, 1.0),
            ReplicaLearner::Arf(f) => f.train(x, y, seq),
            ReplicaLearner::Slr(m) => m.train(x, y),
        }
        self.trained += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stream(n: usize, seed: u64) -> Vec<(Vec<f64>, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
                let y = usize::from(x[0] + 0.2 * x[1] > 0.6);
                (x, y)
            })
            .collect()
    }

    #[test]
    fn param_validation() {
        let mut p = LearnerParams::default();
        assert!(p.validate().is_ok());
        p.ht.split_confidence = 1.0;
        assert!(p.validate().is_err());
        let mut p = LearnerParams::default();
        p.arf.ensemble_size = 0;
        assert!(Model::new(ClassifierKind::Arf, &p, 2, 3, 0).is_err());
        assert_eq!("ARF".parse::<ClassifierKind>(), Ok(ClassifierKind::Arf));
    }

    #[test]
    fn contract_violations() {
        let mut m = Model::new(ClassifierKind::Slr, &LearnerParams::default(), 2, 2, 0).unwrap();
        assert_eq!(m.train(&[0.0, 1.0], 2, 0), Err(LearnerError::Label { label: 2, classes: 2 }));
        assert_eq!(m.train(&[f64::NAN, 1.0], 0, 0), Err(LearnerError::NonFinite));
        assert!(matches!(m.train(&[1.0], 0, 0), Err(LearnerError::Dimension { .. })));
    }

    #[test]
    fn empty_merge_keeps_version_and_bytes() {
        for kind in ClassifierKind::ALL {
            let mut m = Model::new(kind, &LearnerParams::default(), 3, 3, 4).unwrap();
            for (i, (x, y)) in stream(300, 1).into_iter().enumerate() {
                m.train(&x, y, i as u64).unwrap();
            }
            let bytes = m.to_bytes();
            assert_eq!(m.merge(vec![]).unwrap(), 0);
            let r = m.fork();
            let _ = r.predict(&[0.5, 0.5, 0.5]);
            assert_eq!(m.merge(vec![r, m.fork()]).unwrap(), 0);
            assert_eq!(m.to_bytes(), bytes, "{kind}");
        }
    }

    #[test]
    fn stale_replica_is_rejected() {
        let mut m = Model::new(ClassifierKind::Ht, &LearnerParams::default(), 2, 3, 0).unwrap();
        let mut r = m.fork();
        r.train(&[0.1, 0.2, 0.3], 1, 0).unwrap();
        let stale = m.fork();
        m.merge(vec![r]).unwrap();
        assert_eq!(m.merge(vec![stale]), Err(LearnerError::VersionMismatch { replica: 0, global: 1 }));
    }

    #[test]
    fn forked_replica_predicts_like_parent_and_is_isolated() {
        for kind in ClassifierKind::ALL {
            let mut m = Model::new(kind, &LearnerParams::default(), 2, 3, 2).unwrap();
            let data = stream(600, 2);
            for (i, (x, y)) in data.iter().enumerate() {
                m.train(x, *y, i as u64).unwrap();
            }
            let before = m.to_bytes();
            let mut r = m.fork();
            for (x, _) in &data[..50] {
                assert_eq!(r.predict(x), m.predict(x));
            }
            for (i, (x, y)) in data.iter().take(100).enumerate() {
                r.train(x, *y, i as u64).unwrap();
            }
            assert_eq!(m.to_bytes(), before);
        }
    }

    #[test]
    fn predictions_are_distributions() {
        let data = stream(2000, 9);
        for kind in ClassifierKind::ALL {
            let mut m = Model::new(kind, &LearnerParams::default(), 2, 3, 3).unwrap();
            for (i, (x, y)) in data.iter().enumerate() {
                assert!(m.predict(x).is_valid());
                m.train(x, *y, i as u64).unwrap();
            }
        }
    }
}
