use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::evaluate::EvalParams;
use crate::features::{BowParams, FeatureSet, Lexicons};
use crate::learners::{ClassifierKind, LearnerParams};
use crate::model::ClassScheme;
use crate::normalize::{parse_stats_file, NormalizationMode, NormalizationSnapshot};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot parse configuration: {0}")]
    Parse(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

/// How the input stream is cut into micro-batches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BatchMode {
    /// Fixed number of records per batch.
    Size(usize),
    /// Records arriving within a wall-clock interval.
    IntervalMs(u64),
}

impl Default for BatchMode {
    fn default() -> Self {
        BatchMode::Size(1024)
    }
}

/// Replacement word lists, given as file contents.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LexiconOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub swear: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sentiment: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pos: Option<String>,
}

mod scheme_serde {
    use super::*;

    pub fn serialize<S: Serializer>(s: &ClassScheme, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_u8(s.num_classes() as u8)
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(u64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<ClassScheme, D::Error> {
        let n = match Raw::deserialize(de)? {
            Raw::Num(n) => n,
            Raw::Text(t) => match t.trim() {
                "two" | "2" => 2,
                "three" | "3" => 3,
                other => return Err(serde::de::Error::custom(format!("unknown class scheme `{other}`"))),
            },
        };
        u8::try_from(n)
            .ok()
            .and_then(ClassScheme::from_count)
            .ok_or_else(|| serde::de::Error::custom(format!("classes must be 2 or 3, got {n}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub classifier: ClassifierKind,
    #[serde(with = "scheme_serde")]
    pub classes: ClassScheme,
    pub preprocess: bool,
    pub normalize: NormalizationMode,
    pub adaptive_bow: bool,
    pub workers: usize,
    pub batch: BatchMode,
    pub alert_threshold: f64,
    pub sample_rate: f64,
    pub boost_factor: f64,
    pub seed: u64,
    pub features: FeatureSet,
    pub learner: LearnerParams,
    pub bow: BowParams,
    pub eval: EvalParams,
    pub lexicons: LexiconOverrides,
    /// Contents of a stats file; when present normalization uses these
    /// fixed statistics instead of learning them online.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stats: Option<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            classifier: ClassifierKind::Ht,
            classes: ClassScheme::TwoClass,
            preprocess: true,
            normalize: NormalizationMode::MinMaxNoOutliers,
            adaptive_bow: true,
            workers: 1,
            batch: BatchMode::default(),
            alert_threshold: 0.5,
            sample_rate: 0.01,
            boost_factor: 10.0,
            seed: 42,
            features: FeatureSet::default(),
            learner: LearnerParams::default(),
            bow: BowParams::default(),
            eval: EvalParams::default(),
            lexicons: LexiconOverrides::default(),
            stats: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.workers == 0 {
            return invalid("workers must be at least 1");
        }
        match self.batch {
            BatchMode::Size(0) => return invalid("batch size must be at least 1"),
            BatchMode::IntervalMs(0) => return invalid("batch interval must be at least 1 ms"),
            _ => {}
        }
        if !(0.0..=1.0).contains(&self.alert_threshold) {
            return invalid("alert_threshold must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.sample_rate) {
            return invalid("sample_rate must lie in [0, 1]");
        }
        if !(self.boost_factor >= 1.0 && self.boost_factor.is_finite()) {
            return invalid("boost_factor must be >= 1");
        }
        if self.features.is_empty() {
            return invalid("at least one feature must be enabled");
        }
        if self.eval.window == 0 || self.eval.sample_every == 0 {
            return invalid("evaluation window and sampling period must be positive");
        }
        self.learner.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.bow.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.load_lexicons()?;
        self.load_stats()?;
        Ok(())
    }

    pub fn load_lexicons(&self) -> Result<Lexicons, ConfigError> {
        let o = &self.lexicons;
        Lexicons::with_overrides(o.swear.as_deref(), o.sentiment.as_deref(), o.pos.as_deref())
            .map_err(|e| ConfigError::Invalid(format!("lexicon: {e}")))
    }

    pub fn load_stats(&self) -> Result<Option<NormalizationSnapshot>, ConfigError> {
        self.stats
            .as_deref()
            .map(|s| parse_stats_file(s, &self.features))
            .transpose()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
        } else {
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
        }
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.class_names().iter().map(|s| s.to_string()).collect()
    }
}
