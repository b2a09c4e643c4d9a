//! Word lists used by the text features.
//!
//! File formats, one entry per line, `#` starts a comment line:
//! - swear list: `word`
//! - sentiment lexicon: `word<TAB>score`, score an integer in `[-5, 5]`, non-zero
//! - POS lexicon: `word<TAB>tag`, tag one of `adjective`, `adverb`, `verb`

use std::collections::{HashMap, HashSet};
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const BUNDLED_SWEAR: &str = include_str!("../../data/swear_seed.txt");
const BUNDLED_SENTIMENT: &str = include_str!("../../data/sentiment.tsv");
const BUNDLED_POS: &str = include_str!("../../data/pos.tsv");

#[derive(Debug, Error, PartialEq)]
pub enum LexiconError {
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn is_word(w: &str) -> bool {
    !w.is_empty() && w.chars().all(char::is_alphabetic)
}

/// A set of lowercase, letters-only words.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordSet(HashSet<String>);

impl WordSet {
    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut set = HashSet::new();
        for (line, l) in data_lines(text) {
            let w = l.to_lowercase();
            if !is_word(&w) {
                return Err(LexiconError::Format { line, msg: format!("`{l}` is not a single word") });
            }
            set.insert(w);
        }
        Ok(WordSet(set))
    }

    pub fn contains(&self, w: &str) -> bool {
        self.0.contains(w)
    }

    pub fn insert(&mut self, w: String) -> bool {
        self.0.insert(w)
    }

    pub fn remove(&mut self, w: &str) -> bool {
        self.0.remove(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn sorted_words(&self) -> impl Iterator<Item = &str> {
        let mut v: Vec<&str> = self.iter().collect();
        v.sort_unstable();
        v.into_iter()
    }
}

impl<S: Into<String>> FromIterator<S> for WordSet {
    fn from_iter<T: IntoIterator<Item = S>>(iter: T) -> Self {
        WordSet(iter.into_iter().map(|s| s.into().to_lowercase()).collect())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SentimentLexicon(HashMap<String, i8>);

impl SentimentLexicon {
    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut map = HashMap::new();
        for (line, l) in data_lines(text) {
            let (w, s) = l
                .split_once('\t')
                .ok_or_else(|| LexiconError::Format { line, msg: "expected `word<TAB>score`".into() })?;
            let score: i8 = s
                .trim()
                .parse()
                .map_err(|_| LexiconError::Format { line, msg: format!("bad score `{s}`") })?;
            if score == 0 || !(-5..=5).contains(&score) {
                return Err(LexiconError::Format { line, msg: format!("score {score} outside [-5,5]\\{{0}}") });
            }
            map.insert(w.trim().to_lowercase(), score);
        }
        Ok(SentimentLexicon(map))
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, i8)>) -> Self {
        SentimentLexicon(pairs.into_iter().map(|(w, s)| (w.to_lowercase(), s.clamp(-5, 5))).filter(|(_, s)| *s != 0).collect())
    }

    pub fn score(&self, w: &str) -> Option<i8> {
        self.0.get(w).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sorted_entries(&self) -> impl Iterator<Item = (&str, i8)> {
        let mut v: Vec<(&str, i8)> = self.0.iter().map(|(w, s)| (w.as_str(), *s)).collect();
        v.sort_unstable();
        v.into_iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosTag {
    Adjective,
    Adverb,
    Verb,
}

impl std::str::FromStr for PosTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "adjective" | "adj" | "jj" => Ok(PosTag::Adjective),
            "adverb" | "adv" | "rb" => Ok(PosTag::Adverb),
            "verb" | "vb" => Ok(PosTag::Verb),
            other => Err(format!("unknown POS tag `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PosLexicon(HashMap<String, PosTag>);

impl PosLexicon {
    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut map = HashMap::new();
        for (line, l) in data_lines(text) {
            let (w, t) = l
                .split_once('\t')
                .ok_or_else(|| LexiconError::Format { line, msg: "expected `word<TAB>tag`".into() })?;
            let tag = t.parse().map_err(|msg| LexiconError::Format { line, msg })?;
            map.insert(w.trim().to_lowercase(), tag);
        }
        Ok(PosLexicon(map))
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, PosTag)>) -> Self {
        PosLexicon(pairs.into_iter().map(|(w, t)| (w.to_lowercase(), t)).collect())
    }

    pub fn tag(&self, w: &str) -> Option<PosTag> {
        self.0.get(w).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sorted_words(&self) -> impl Iterator<Item = &str> {
        let mut v: Vec<&str> = self.0.keys().map(String::as_str).collect();
        v.sort_unstable();
        v.into_iter()
    }
}

/// The three word lists a pipeline runs with.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicons {
    pub swear_seed: WordSet,
    pub sentiment: SentimentLexicon,
    pub pos: PosLexicon,
}

static BUNDLED: LazyLock<Lexicons> = LazyLock::new(|| Lexicons {
    swear_seed: WordSet::parse(BUNDLED_SWEAR).expect("bundled swear list"),
    sentiment: SentimentLexicon::parse(BUNDLED_SENTIMENT).expect("bundled sentiment lexicon"),
    pos: PosLexicon::parse(BUNDLED_POS).expect("bundled POS lexicon"),
});

impl Lexicons {
    /// Lists shipped in the crate's `data/` directory.
    pub fn bundled() -> &'static Lexicons {
        &BUNDLED
    }

    /// Bundled lists with any of the three replaced by caller-supplied file contents.
    pub fn with_overrides(swear: Option<&str>, sentiment: Option<&str>, pos: Option<&str>) -> Result<Self, LexiconError> {
        let b = Self::bundled();
        Ok(Lexicons {
            swear_seed: swear.map(WordSet::parse).transpose()?.unwrap_or_else(|| b.swear_seed.clone()),
            sentiment: sentiment.map(SentimentLexicon::parse).transpose()?.unwrap_or_else(|| b.sentiment.clone()),
            pos: pos.map(PosLexicon::parse).transpose()?.unwrap_or_else(|| b.pos.clone()),
        })
    }
}
