//! Value types shared by every pipeline stage.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Milliseconds since the Unix epoch, UTC.
pub type EpochMillis = i64;

pub const MILLIS_PER_DAY: f64 = 86_400_000.0;

/// Base class label carried by an annotated post.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLabel {
    Normal,
    Abusive,
    Hateful,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 3] = [ClassLabel::Normal, ClassLabel::Abusive, ClassLabel::Hateful];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Normal => "normal",
            ClassLabel::Abusive => "abusive",
            ClassLabel::Hateful => "hateful",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" => Ok(ClassLabel::Normal),
            "abusive" => Ok(ClassLabel::Abusive),
            "hateful" => Ok(ClassLabel::Hateful),
            other => Err(format!("unknown class label `{other}`")),
        }
    }
}

/// How base labels collapse into the classes a model actually learns.
///
/// Index 0 is always the normal class, so "non-normal" is simply `index != 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum ClassScheme {
    /// Normal vs. aggressive (abusive and hateful merged).
    #[default]
    #[serde(rename = "two")]
    TwoClass,
    #[serde(rename = "three")]
    ThreeClass,
}

impl ClassScheme {
    pub fn from_count(n: u8) -> Option<Self> {
        match n {
            2 => Some(ClassScheme::TwoClass),
            3 => Some(ClassScheme::ThreeClass),
            _ => None,
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            ClassScheme::TwoClass => 2,
            ClassScheme::ThreeClass => 3,
        }
    }

    pub fn effective(self, label: ClassLabel) -> usize {
        match (self, label) {
            (_, ClassLabel::Normal) => 0,
            (ClassScheme::TwoClass, _) => 1,
            (ClassScheme::ThreeClass, ClassLabel::Abusive) => 1,
            (ClassScheme::ThreeClass, ClassLabel::Hateful) => 2,
        }
    }

    pub fn class_names(self) -> &'static [&'static str] {
        match self {
            ClassScheme::TwoClass => &["normal", "aggressive"],
            ClassScheme::ThreeClass => &["normal", "abusive", "hateful"],
        }
    }

    pub fn class_name(self, index: usize) -> &'static str {
        self.class_names().get(index).copied().unwrap_or("unknown")
    }
}

/// Maps a base label to its effective class index under `scheme`.
pub fn effective_label(label: ClassLabel, scheme: ClassScheme) -> usize {
    scheme.effective(label)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct UserProfile {
    /// Author id, when the payload carries one. Used only for alert bookkeeping.
    pub id: Option<String>,
    pub account_created_at: EpochMillis,
    pub statuses_count: u64,
    pub listed_count: u64,
    pub followers_count: u64,
    pub friends_count: u64,
}

/// A parsed post. `label` is set for annotated posts coming from the labeled stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TweetRecord {
    pub id: String,
    pub text: String,
    pub created_at: EpochMillis,
    pub is_retweet: bool,
    pub is_reply: bool,
    pub user: UserProfile,
    pub label: Option<ClassLabel>,
}

impl TweetRecord {
    pub fn is_labeled(&self) -> bool {
        self.label.is_some()
    }

    /// Account age at posting time in fractional days, never negative.
    pub fn account_age_days(&self) -> f64 {
        ((self.created_at - self.user.account_created_at) as f64 / MILLIS_PER_DAY).max(0.0)
    }
}

/// Numeric feature vector in the run's feature layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub features: Vec<f64>,
    pub label: Option<ClassLabel>,
    pub source_id: String,
    /// Position of the originating record in the input stream.
    pub seq: u64,
}

impl Instance {
    pub fn new(features: Vec<f64>, label: Option<ClassLabel>, source_id: impl Into<String>, seq: u64) -> Self {
        Self { features, label, source_id: source_id.into(), seq }
    }

    pub fn is_finite(&self) -> bool {
        self.features.iter().all(|v| v.is_finite())
    }
}

/// Per-class probabilities; entries in `[0, 1]` summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution(Vec<f64>);

impl ClassDistribution {
    pub fn uniform(k: usize) -> Self {
        assert!(k > 0, "distribution over zero classes");
        ClassDistribution(vec![1.0 / k as f64; k])
    }

    /// Normalizes non-negative weights; an all-zero (or non-finite) vector becomes uniform.
    pub fn from_weights(weights: Vec<f64>) -> Self {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Self::uniform(weights.len());
        }
        ClassDistribution(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the most probable class; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }

    pub fn max_prob(&self) -> f64 {
        self.0[self.argmax()]
    }

    pub fn is_valid(&self) -> bool {
        let sum: f64 = self.0.iter().sum();
        self.0.iter().all(|p| (0.0..=1.0).contains(p)) && (sum - 1.0).abs() <= 1e-9
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub source_id: String,
    pub label: String,
    pub confidence: f64,
    pub emitted_at: EpochMillis,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effective_label_mappings() {
        assert_eq!(effective_label(ClassLabel::Normal, ClassScheme::TwoClass), 0);
        assert_eq!(effective_label(ClassLabel::Hateful, ClassScheme::TwoClass), 1);
        assert_eq!(effective_label(ClassLabel::Abusive, ClassScheme::TwoClass), 1);
        assert_eq!(effective_label(ClassLabel::Abusive, ClassScheme::ThreeClass), 1);
        assert_eq!(effective_label(ClassLabel::Hateful, ClassScheme::ThreeClass), 2);
        assert_eq!(ClassScheme::TwoClass.class_name(1), "aggressive");
    }

    #[test]
    fn effective_label_is_surjective() {
        for scheme in [ClassScheme::TwoClass, ClassScheme::ThreeClass] {
            let mut hit = vec![false; scheme.num_classes()];
            for l in ClassLabel::ALL {
                hit[scheme.effective(l)] = true;
            }
            assert!(hit.iter().all(|&h| h));
        }
    }

    #[test]
    fn distribution_normalizes_and_argmax_prefers_first() {
        let d = ClassDistribution::from_weights(vec![2.0, 2.0]);
        assert_eq!(d.argmax(), 0);
        assert!(d.is_valid());
        let z = ClassDistribution::from_weights(vec![0.0, 0.0, 0.0]);
        assert_eq!(z.probs(), &[1.0 / 3.0; 3]);
    }

    #[test]
    fn account_age_is_clamped() {
        let t = TweetRecord {
            id: "1".into(),
            text: "x".into(),
            created_at: 0,
            is_retweet: false,
            is_reply: false,
            user: UserProfile { account_created_at: 10 * 86_400_000, ..Default::default() },
            label: None,
        };
        assert_eq!(t.account_age_days(), 0.0);
    }
}
