//! Adaptive swear-word lexicon.
//!
//! Labeled posts feed two tables of per-word document counts, one for the
//! aggressive group (every non-normal class) and one for normal posts. Every
//! `refresh_period` labeled posts the lexicon is revised from the rates
//! accumulated since the previous refresh, and the tables start over.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::lexicon::WordSet;

#[derive(Debug, Error, PartialEq)]
pub enum BowError {
    #[error("invalid adaptive lexicon parameter: {0}")]
    Param(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BowParams {
    /// Labeled posts between refreshes.
    pub refresh_period: u64,
    /// Minimum share of aggressive posts containing a word for it to be added.
    pub min_rate: f64,
    /// Required enrichment of the aggressive rate over the normal rate.
    pub enrichment: f64,
    /// Minimum document count in the deciding class group.
    pub min_count: u64,
}

impl Default for BowParams {
    fn default() -> Self {
        Self { refresh_period: 1000, min_rate: 0.005, enrichment: 5.0, min_count: 10 }
    }
}

impl BowParams {
    pub fn validate(&self) -> Result<(), BowError> {
        if self.refresh_period == 0 {
            return Err(BowError::Param("refresh_period must be positive".into()));
        }
        if !(self.min_rate >= 0.0 && self.min_rate <= 1.0) {
            return Err(BowError::Param("min_rate must lie in [0, 1]".into()));
        }
        // with enrichment < 1 a word could qualify for both add and remove
        if !(self.enrichment >= 1.0) || !self.enrichment.is_finite() {
            return Err(BowError::Param("enrichment must be >= 1".into()));
        }
        Ok(())
    }
}

/// Count increments gathered by one worker during a micro-batch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BowDelta {
    pub counts_aggressive: HashMap<String, u64>,
    pub counts_normal: HashMap<String, u64>,
    pub total_aggressive: u64,
    pub total_normal: u64,
}

impl BowDelta {
    /// Records one labeled post. Each distinct lowercase word counts once.
    pub fn observe<S: AsRef<str>>(&mut self, tokens: &[S], aggressive: bool) {
        let (counts, total) = if aggressive {
            (&mut self.counts_aggressive, &mut self.total_aggressive)
        } else {
            (&mut self.counts_normal, &mut self.total_normal)
        };
        *total += 1;
        let distinct: HashSet<String> = tokens
            .iter()
            .map(|t| t.as_ref().to_lowercase())
            .filter(|w| !w.is_empty() && w.chars().all(char::is_alphabetic))
            .collect();
        for w in distinct {
            *counts.entry(w).or_insert(0) += 1;
        }
    }

    pub fn merge(&mut self, other: BowDelta) {
        for (w, c) in other.counts_aggressive {
            *self.counts_aggressive.entry(w).or_insert(0) += c;
        }
        for (w, c) in other.counts_normal {
            *self.counts_normal.entry(w).or_insert(0) += c;
        }
        self.total_aggressive += other.total_aggressive;
        self.total_normal += other.total_normal;
    }

    pub fn labeled(&self) -> u64 {
        self.total_aggressive + self.total_normal
    }
}

/// Words added and removed by one refresh, sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefreshOutcome {
    pub added: Vec<String>,
    pub removed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveBow {
    lexicon: WordSet,
    seed: WordSet,
    window: BowDelta,
    params: BowParams,
    refreshes: u64,
}

impl AdaptiveBow {
    pub fn new(seed: WordSet, params: BowParams) -> Result<Self, BowError> {
        params.validate()?;
        Ok(Self { lexicon: seed.clone(), seed, window: BowDelta::default(), params, refreshes: 0 })
    }

    pub fn lexicon(&self) -> &WordSet {
        &self.lexicon
    }

    pub fn seed(&self) -> &WordSet {
        &self.seed
    }

    pub fn params(&self) -> &BowParams {
        &self.params
    }

    pub fn refreshes(&self) -> u64 {
        self.refreshes
    }

    pub fn total_aggressive(&self) -> u64 {
        self.window.total_aggressive
    }

    pub fn total_normal(&self) -> u64 {
        self.window.total_normal
    }

    pub fn count_aggressive(&self, w: &str) -> u64 {
        self.window.counts_aggressive.get(w).copied().unwrap_or(0)
    }

    pub fn count_normal(&self, w: &str) -> u64 {
        self.window.counts_normal.get(w).copied().unwrap_or(0)
    }

    /// Sequential convenience for [`BowDelta::observe`] on the live window.
    pub fn observe<S: AsRef<str>>(&mut self, tokens: &[S], aggressive: bool) {
        self.window.observe(tokens, aggressive);
    }

    pub fn apply(&mut self, delta: BowDelta) {
        self.window.merge(delta);
    }

    pub fn refresh_due(&self) -> bool {
        self.window.labeled() >= self.params.refresh_period
    }

    /// Runs [`refresh`](Self::refresh) when enough labeled posts accumulated.
    pub fn refresh_if_due(&mut self) -> Option<RefreshOutcome> {
        self.refresh_due().then(|| self.refresh())
    }

    /// Revises the lexicon from the current window and resets the window.
    pub fn refresh(&mut self) -> RefreshOutcome {
        let p = &self.params;
        let w = &self.window;
        let rate = |count: u64, total: u64| if total == 0 { 0.0 } else { count as f64 / total as f64 };

        let words: BTreeSet<&String> = w.counts_aggressive.keys().chain(w.counts_normal.keys()).collect();
        let mut out = RefreshOutcome::default();
        for word in words {
            let ca = w.counts_aggressive.get(word).copied().unwrap_or(0);
            let cn = w.counts_normal.get(word).copied().unwrap_or(0);
            let ra = rate(ca, w.total_aggressive);
            let rn = rate(cn, w.total_normal);
            let in_lexicon = self.lexicon.contains(word);
            if !in_lexicon && ra >= p.min_rate && ra >= p.enrichment * rn && ca >= p.min_count {
                out.added.push(word.clone());
            } else if in_lexicon && rn > ra && cn >= p.min_count {
                out.removed.push(word.clone());
            }
        }
        for word in &out.added {
            self.lexicon.insert(word.clone());
        }
        for word in &out.removed {
            self.lexicon.remove(word);
        }
        self.window = BowDelta::default();
        self.refreshes += 1;
        out
    }
}
