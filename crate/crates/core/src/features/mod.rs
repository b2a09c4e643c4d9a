//! Post → numeric feature vector.
//!
//! The canonical layout has 16 slots (profile, text and network features).
//! A run may switch any subset off; the instance vector then holds only the
//! enabled slots, in canonical order.

pub mod bow;
pub mod lexicon;

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::model::{Instance, TweetRecord};
use crate::textprep::CleanedText;

pub use bow::{AdaptiveBow, BowDelta, BowParams, RefreshOutcome};
pub use lexicon::{Lexicons, PosLexicon, PosTag, SentimentLexicon, WordSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    AccountAgeDays = 0,
    StatusesCount = 1,
    ListedCount = 2,
    HashtagCount = 3,
    UrlCount = 4,
    UppercaseWordCount = 5,
    AdjRelFreq = 6,
    AdvRelFreq = 7,
    VerbRelFreq = 8,
    MeanWordsPerSentence = 9,
    MeanWordLength = 10,
    SentimentPos = 11,
    SentimentNeg = 12,
    SwearCount = 13,
    FollowersCount = 14,
    FriendsCount = 15,
}

pub const NUM_FEATURES: usize = 16;

impl Feature {
    pub const ALL: [Feature; NUM_FEATURES] = [
        Feature::AccountAgeDays,
        Feature::StatusesCount,
        Feature::ListedCount,
        Feature::HashtagCount,
        Feature::UrlCount,
        Feature::UppercaseWordCount,
        Feature::AdjRelFreq,
        Feature::AdvRelFreq,
        Feature::VerbRelFreq,
        Feature::MeanWordsPerSentence,
        Feature::MeanWordLength,
        Feature::SentimentPos,
        Feature::SentimentNeg,
        Feature::SwearCount,
        Feature::FollowersCount,
        Feature::FriendsCount,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Feature::AccountAgeDays => "account_age_days",
            Feature::StatusesCount => "statuses_count",
            Feature::ListedCount => "listed_count",
            Feature::HashtagCount => "hashtag_count",
            Feature::UrlCount => "url_count",
            Feature::UppercaseWordCount => "uppercase_word_count",
            Feature::AdjRelFreq => "adj_rel_freq",
            Feature::AdvRelFreq => "adv_rel_freq",
            Feature::VerbRelFreq => "verb_rel_freq",
            Feature::MeanWordsPerSentence => "mean_words_per_sentence",
            Feature::MeanWordLength => "mean_word_length",
            Feature::SentimentPos => "sentiment_pos",
            Feature::SentimentNeg => "sentiment_neg",
            Feature::SwearCount => "swear_count",
            Feature::FollowersCount => "followers_count",
            Feature::FriendsCount => "friends_count",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Feature::ALL
            .into_iter()
            .find(|f| f.name() == s.trim())
            .ok_or_else(|| format!("unknown feature `{s}`"))
    }
}

/// Enabled subset of the canonical layout, fixed for a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Feature>", into = "Vec<Feature>")]
pub struct FeatureSet(Vec<Feature>);

impl TryFrom<Vec<Feature>> for FeatureSet {
    type Error = String;

    fn try_from(v: Vec<Feature>) -> Result<Self, Self::Error> {
        FeatureSet::new(v)
    }
}

impl From<FeatureSet> for Vec<Feature> {
    fn from(s: FeatureSet) -> Self {
        s.0
    }
}

impl Default for FeatureSet {
    fn default() -> Self {
        FeatureSet(Feature::ALL.to_vec())
    }
}

impl FeatureSet {
    pub fn new(mut features: Vec<Feature>) -> Result<Self, String> {
        features.sort();
        features.dedup();
        if features.is_empty() {
            return Err("at least one feature must be enabled".into());
        }
        Ok(FeatureSet(features))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn features(&self) -> &[Feature] {
        &self.0
    }

    /// Position of `f` in the compact vector, if enabled.
    pub fn position(&self, f: Feature) -> Option<usize> {
        self.0.iter().position(|&g| g == f)
    }

    pub fn project(&self, full: &[f64; NUM_FEATURES]) -> Vec<f64> {
        self.0.iter().map(|f| full[f.index()]).collect()
    }
}

static HASHTAG_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"#\w+").unwrap());
static URL_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)https?://\S*|\bt\.co/\S*").unwrap());

pub fn count_hashtags(raw: &str) -> usize {
    HASHTAG_RE.find_iter(raw).count()
}

pub fn count_urls(raw: &str) -> usize {
    URL_RE.find_iter(raw).count()
}

/// Tokens whose letters are all uppercase, with at least two letters.
pub fn count_uppercase_words<S: AsRef<str>>(tokens: &[S]) -> usize {
    tokens
        .iter()
        .filter(|t| {
            let mut letters = 0;
            for c in t.as_ref().chars().filter(|c| c.is_alphabetic()) {
                if !c.is_uppercase() {
                    return false;
                }
                letters += 1;
            }
            letters >= 2
        })
        .count()
}

/// Shares of adjectives, adverbs and verbs among the tokens.
pub fn pos_rel_freqs<S: AsRef<str>>(tokens: &[S], pos: &PosLexicon) -> (f64, f64, f64) {
    if tokens.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let (mut adj, mut adv, mut verb) = (0usize, 0usize, 0usize);
    for t in tokens {
        match pos.tag(&t.as_ref().to_lowercase()) {
            Some(PosTag::Adjective) => adj += 1,
            Some(PosTag::Adverb) => adv += 1,
            Some(PosTag::Verb) => verb += 1,
            None => {}
        }
    }
    let n = tokens.len() as f64;
    (adj as f64 / n, adv as f64 / n, verb as f64 / n)
}

/// Mean words per sentence and mean word length (in characters).
pub fn stylistic<S: AsRef<str>>(sentences: &[Vec<String>], tokens: &[S]) -> (f64, f64) {
    let words_per_sentence = if sentences.is_empty() {
        0.0
    } else {
        sentences.iter().map(Vec::len).sum::<usize>() as f64 / sentences.len() as f64
    };
    let word_len = if tokens.is_empty() {
        0.0
    } else {
        tokens.iter().map(|t| t.as_ref().chars().count()).sum::<usize>() as f64 / tokens.len() as f64
    };
    (words_per_sentence, word_len)
}

/// Dual-scale sentiment: strongest positive score (at least 1) and strongest
/// negative score (at most -1).
pub fn sentiment<S: AsRef<str>>(tokens: &[S], lex: &SentimentLexicon) -> (f64, f64) {
    let (mut pos, mut neg) = (1i8, -1i8);
    for t in tokens {
        if let Some(s) = lex.score(&t.as_ref().to_lowercase()) {
            pos = pos.max(s);
            neg = neg.min(s);
        }
    }
    (pos as f64, neg as f64)
}

pub fn swear_count<S: AsRef<str>>(tokens: &[S], lexicon: &WordSet) -> usize {
    tokens.iter().filter(|t| lexicon.contains(&t.as_ref().to_lowercase())).count()
}

/// Computes every canonical slot for one post.
pub fn extract_all(tweet: &TweetRecord, text: &CleanedText, swear: &WordSet, lex: &Lexicons) -> [f64; NUM_FEATURES] {
    let tokens = &text.tokens;
    let (adj, adv, verb) = pos_rel_freqs(tokens, &lex.pos);
    let (wps, wlen) = stylistic(&text.sentences, tokens);
    let (spos, sneg) = sentiment(tokens, &lex.sentiment);
    [
        tweet.account_age_days(),
        tweet.user.statuses_count as f64,
        tweet.user.listed_count as f64,
        count_hashtags(&text.raw) as f64,
        count_urls(&text.raw) as f64,
        count_uppercase_words(tokens) as f64,
        adj,
        adv,
        verb,
        wps,
        wlen,
        spos,
        sneg,
        swear_count(tokens, swear) as f64,
        tweet.user.followers_count as f64,
        tweet.user.friends_count as f64,
    ]
}

/// Builds the instance for `tweet` in the run's layout. `swear` is the
/// lexicon snapshot in force for the current micro-batch.
pub fn extract(
    tweet: &TweetRecord,
    text: &CleanedText,
    swear: &WordSet,
    lex: &Lexicons,
    layout: &FeatureSet,
    seq: u64,
) -> Instance {
    let full = extract_all(tweet, text, swear, lex);
    Instance::new(layout.project(&full), tweet.label, tweet.id.clone(), seq)
}
