//! Seeded generator of labeled posts for desk-scale runs and tests.
//!
//! Post text is composed from five word pools (neutral filler, POS-tagged
//! words, sentiment words, seed swear words, emergent words absent from every
//! lexicon) with per-class sampling rates, so every feature the extractor
//! computes carries some class signal. Profile counters are drawn from per-class
//! log-normal distributions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::MIN_TIMESTAMP_MS;
use crate::features::lexicon::Lexicons;
use crate::model::{ClassLabel, EpochMillis, TweetRecord, UserProfile, MILLIS_PER_DAY};

#[derive(Debug, Error, PartialEq)]
pub enum SyntheticError {
    #[error("class priors must be 3 non-negative values summing to 1, got {0:?}")]
    Priors(Vec<f64>),
    #[error("n_tweets must be positive")]
    Empty,
    #[error("invalid class profile: {0}")]
    Profile(String),
}

/// Generator parameters for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProfile {
    pub tokens_mean: f64,
    pub sentences_mean: f64,
    /// Per-token probabilities of drawing from each pool.
    pub swear_rate: f64,
    pub negative_rate: f64,
    pub positive_rate: f64,
    pub pos_tagged_rate: f64,
    pub uppercase_rate: f64,
    /// Probability that a post contains one emergent word.
    pub emergent_rate: f64,
    pub hashtag_mean: f64,
    pub url_mean: f64,
    pub mention_mean: f64,
    pub retweet_rate: f64,
    pub account_age_days_mean: f64,
    pub statuses_mean: f64,
    pub listed_mean: f64,
    pub followers_mean: f64,
    pub friends_mean: f64,
}

impl ClassProfile {
    pub fn normal() -> Self {
        Self {
            tokens_mean: 12.0,
            sentences_mean: 1.6,
            swear_rate: 0.008,
            negative_rate: 0.04,
            positive_rate: 0.08,
            pos_tagged_rate: 0.3,
            uppercase_rate: 0.03,
            emergent_rate: 0.0,
            hashtag_mean: 0.5,
            url_mean: 0.4,
            mention_mean: 0.5,
            retweet_rate: 0.25,
            account_age_days_mean: 1400.0,
            statuses_mean: 9000.0,
            listed_mean: 40.0,
            followers_mean: 1200.0,
            friends_mean: 700.0,
        }
    }

    pub fn abusive() -> Self {
        Self {
            tokens_mean: 11.0,
            sentences_mean: 1.4,
            swear_rate: 0.16,
            negative_rate: 0.12,
            positive_rate: 0.03,
            uppercase_rate: 0.12,
            hashtag_mean: 0.2,
            url_mean: 0.1,
            mention_mean: 0.9,
            retweet_rate: 0.1,
            account_age_days_mean: 900.0,
            statuses_mean: 14000.0,
            listed_mean: 12.0,
            followers_mean: 500.0,
            friends_mean: 550.0,
            ..Self::normal()
        }
    }

    pub fn hateful() -> Self {
        Self {
            tokens_mean: 13.0,
            sentences_mean: 1.5,
            swear_rate: 0.08,
            negative_rate: 0.18,
            positive_rate: 0.02,
            uppercase_rate: 0.10,
            hashtag_mean: 0.4,
            url_mean: 0.2,
            mention_mean: 0.6,
            retweet_rate: 0.15,
            account_age_days_mean: 500.0,
            statuses_mean: 6000.0,
            listed_mean: 6.0,
            followers_mean: 300.0,
            friends_mean: 400.0,
            ..Self::normal()
        }
    }

    fn validate(&self) -> Result<(), SyntheticError> {
        let rates = [
            self.swear_rate,
            self.negative_rate,
            self.positive_rate,
            self.pos_tagged_rate,
            self.uppercase_rate,
            self.emergent_rate,
            self.retweet_rate,
        ];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(SyntheticError::Profile("rates must lie in [0, 1]".into()));
        }
        if self.swear_rate + self.negative_rate + self.positive_rate + self.pos_tagged_rate > 1.0 {
            return Err(SyntheticError::Profile("token pool rates sum above 1".into()));
        }
        let means = [
            self.tokens_mean,
            self.sentences_mean,
            self.hashtag_mean,
            self.url_mean,
            self.mention_mean,
            self.account_age_days_mean,
            self.statuses_mean,
            self.listed_mean,
            self.followers_mean,
            self.friends_mean,
        ];
        if means.iter().any(|m| !(m.is_finite() && *m >= 0.0)) || self.tokens_mean < 1.0 || self.sentences_mean < 1.0 {
            return Err(SyntheticError::Profile("means must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Switch to a second set of class profiles from record index `at` on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    pub at: usize,
    pub profiles: [ClassProfile; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_tweets: usize,
    /// Normal, abusive, hateful.
    pub class_priors: Vec<f64>,
    pub profiles: [ClassProfile; 3],
    pub drift: Option<Drift>,
    pub emergent_words: Vec<String>,
    pub seed: u64,
    /// Id of the first generated post; later ids count up from here.
    #[serde(default)]
    pub first_id: u64,
    /// Timestamp of the first post.
    #[serde(default = "default_start")]
    pub start_ms: EpochMillis,
}

fn default_start() -> EpochMillis {
    1_514_764_800_000 // 2018-01-01T00:00:00Z
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_tweets: 10_000,
            class_priors: vec![0.626, 0.316, 0.058],
            profiles: [ClassProfile::normal(), ClassProfile::abusive(), ClassProfile::hateful()],
            drift: None,
            emergent_words: ["zorkle", "blarfy", "snivvel", "grumbix", "flonker"].map(String::from).to_vec(),
            seed: 42,
            first_id: 0,
            start_ms: default_start(),
        }
    }
}

impl SyntheticConfig {
    pub fn with_size(n_tweets: usize, seed: u64) -> Self {
        Self { n_tweets, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SyntheticError> {
        if self.n_tweets == 0 {
            return Err(SyntheticError::Empty);
        }
        let p = &self.class_priors;
        if p.len() != 3 || p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(SyntheticError::Priors(p.clone()));
        }
        self.profiles.iter().try_for_each(ClassProfile::validate)?;
        if let Some(d) = &self.drift {
            d.profiles.iter().try_for_each(ClassProfile::validate)?;
        }
        if self.emergent_words.iter().any(|w| w.is_empty() || !w.chars().all(|c| c.is_ascii_lowercase())) {
            return Err(SyntheticError::Profile("emergent words must be non-empty lowercase ASCII".into()));
        }
        Ok(())
    }
}

const NEUTRAL_WORDS: &[&str] = &[
    "time", "people", "year", "day", "thing", "man", "world", "life", "hand", "part", "child", "eye", "woman",
    "place", "week", "case", "point", "number", "group", "problem", "fact", "game", "team", "phone", "music",
    "movie", "school", "city", "house", "car", "food", "coffee", "news", "book", "friend", "family", "night",
    "morning", "weekend", "party", "song", "video", "picture", "class", "job", "office", "street", "road",
    "weather", "rain", "sun", "beach", "train", "bus", "ticket", "show", "season", "match", "player", "coach",
    "question", "answer", "story", "idea", "plan", "money", "price", "shop", "store", "market", "water", "dinner",
    "lunch", "breakfast", "tea", "dog", "cat", "bird", "garden", "park", "room", "door", "window", "table",
    "chair", "computer", "internet", "account", "tweet", "post", "page", "link", "update", "event", "meeting",
    "project", "work", "holiday", "trip", "flight", "hotel", "country", "state", "town", "river", "mountain",
    "snow", "summer", "winter", "spring", "autumn", "birthday", "gift", "card", "letter", "message", "email",
];

struct Pools<'a> {
    neutral: Vec<&'a str>,
    pos_tagged: Vec<&'a str>,
    positive: Vec<&'a str>,
    negative: Vec<&'a str>,
    swear: Vec<&'a str>,
}

impl<'a> Pools<'a> {
    fn from_lexicons(lex: &'a Lexicons) -> Self {
        let mut positive: Vec<&str> = Vec::new();
        let mut negative: Vec<&str> = Vec::new();
        for (w, s) in lex.sentiment.sorted_entries() {
            if lex.swear_seed.contains(w) {
                continue;
            }
            if s > 0 {
                positive.push(w)
            } else {
                negative.push(w)
            }
        }
        let mut pos_tagged: Vec<&str> = lex.pos.sorted_words().filter(|w| lex.sentiment.score(w).is_none()).collect();
        pos_tagged.retain(|w| !lex.swear_seed.contains(w));
        Self {
            neutral: NEUTRAL_WORDS
                .iter()
                .copied()
                .filter(|w| lex.sentiment.score(w).is_none() && !lex.swear_seed.contains(w))
                .collect(),
            pos_tagged,
            positive,
            negative,
            swear: lex.swear_seed.sorted_words().collect(),
        }
    }
}

fn pick<'a, R: Rng>(rng: &mut R, pool: &[&'a str]) -> &'a str {
    pool[rng.random_range(0..pool.len())]
}

fn poisson<R: Rng>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

fn lognormal<R: Rng>(rng: &mut R, mean: f64) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    const SIGMA: f64 = 0.8;
    let mu = mean.ln() - SIGMA * SIGMA / 2.0;
    LogNormal::new(mu, SIGMA).map(|d| d.sample(rng)).unwrap_or(mean)
}

fn sample_label<R: Rng>(rng: &mut R, priors: &[f64]) -> ClassLabel {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in priors.iter().enumerate() {
        acc += p;
        if u < acc {
            return ClassLabel::ALL[i];
        }
    }
    // rounding slack lands on the last class with non-zero prior
    let last = priors.iter().rposition(|p| *p > 0.0).unwrap_or(0);
    ClassLabel::ALL[last]
}

fn compose_text<R: Rng>(rng: &mut R, p: &ClassProfile, pools: &Pools<'_>, emergent: &[String]) -> String {
    let n_tokens = 1 + poisson(rng, p.tokens_mean - 1.0) as usize;
    let mut words: Vec<String> = Vec::with_capacity(n_tokens + 4);
    for _ in 0..n_tokens {
        let u: f64 = rng.random();
        let swear = p.swear_rate;
        let negative = swear + p.negative_rate;
        let positive = negative + p.positive_rate;
        let tagged = positive + p.pos_tagged_rate;
        let pool = if u < swear {
            &pools.swear
        } else if u < negative {
            &pools.negative
        } else if u < positive {
            &pools.positive
        } else if u < tagged {
            &pools.pos_tagged
        } else {
            &pools.neutral
        };
        let w = pick(rng, pool);
        let w = if rng.random::<f64>() < p.uppercase_rate { w.to_uppercase() } else { w.to_string() };
        words.push(w);
    }
    if !emergent.is_empty() && rng.random::<f64>() < p.emergent_rate {
        let at = rng.random_range(0..=words.len());
        words.insert(at, emergent[rng.random_range(0..emergent.len())].clone());
    }

    let n_sentences = (1 + poisson(rng, p.sentences_mean - 1.0) as usize).min(words.len());
    let mut text = String::new();
    if rng.random::<f64>() < p.retweet_rate {
        text.push_str("RT ");
    }
    for _ in 0..poisson(rng, p.mention_mean) {
        text.push_str(&format!("@user{} ", rng.random_range(0..10_000)));
    }
    let per = words.len().div_ceil(n_sentences);
    for (i, chunk) in words.chunks(per).enumerate() {
        if i > 0 {
            text.push(' ');
        }
        text.push_str(&chunk.join(" "));
        text.push(['.', '!', '?'][rng.random_range(0..3)]);
    }
    for _ in 0..poisson(rng, p.hashtag_mean) {
        text.push_str(&format!(" #{}", pick(rng, &pools.neutral)));
    }
    for _ in 0..poisson(rng, p.url_mean) {
        text.push_str(&format!(" https://t.co/{:08x}", rng.random::<u32>()));
    }
    text
}

/// Generates `config.n_tweets` labeled posts. Identical configs yield
/// identical streams.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Vec<TweetRecord>, SyntheticError> {
    config.validate()?;
    let lex = Lexicons::bundled();
    let pools = Pools::from_lexicons(lex);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = Vec::with_capacity(config.n_tweets);
    for i in 0..config.n_tweets {
        let label = sample_label(&mut rng, &config.class_priors);
        let profiles = match &config.drift {
            Some(d) if i >= d.at => &d.profiles,
            _ => &config.profiles,
        };
        let p = &profiles[label as usize];
        let text = compose_text(&mut rng, p, &pools, &config.emergent_words);
        let created_at = config.start_ms + (i as i64) * 1_000;
        let age_days = lognormal(&mut rng, p.account_age_days_mean);
        let id = config.first_id + i as u64;
        out.push(TweetRecord {
            id: id.to_string(),
            is_retweet: text.starts_with("RT "),
            text,
            created_at,
            is_reply: false,
            user: UserProfile {
                id: Some(format!("u{}", rng.random_range(0..50_000))),
                account_created_at: (created_at - (age_days * MILLIS_PER_DAY) as i64).max(MIN_TIMESTAMP_MS),
                statuses_count: lognormal(&mut rng, p.statuses_mean) as u64,
                listed_count: lognormal(&mut rng, p.listed_mean) as u64,
                followers_count: lognormal(&mut rng, p.followers_mean) as u64,
                friends_count: lognormal(&mut rng, p.friends_mean) as u64,
            },
            label: Some(label),
        });
    }
    Ok(out)
}
