//! Input side of the pipeline: JSON-lines parsing, rate-controlled replay and
//! multiplexing of the labeled and unlabeled streams.
//!
//! Wire format, one post per line:
//!
//! ```json
//! {"id":"42","text":"...","created_at":"Wed Oct 10 20:19:24 +0000 2018",
//!  "is_retweet":false,"is_reply":false,"label":"abusive",
//!  "user":{"id":"7","created_at":"2015-03-01T00:00:00Z","statuses_count":120,
//!          "listed_count":2,"followers_count":80,"friends_count":95}}
//! ```
//!
//! `label` is optional; `created_at` accepts the Twitter layout or ISO-8601.

pub mod synthetic;

use std::io::{self, BufRead, BufReader};
use std::net::{TcpListener, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use chrono::DateTime;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::model::{ClassLabel, EpochMillis, TweetRecord, UserProfile};

pub use synthetic::{generate_synthetic, ClassProfile, Drift, SyntheticConfig};

const TWITTER_TIME_FORMAT: &str = "%a %b %d %H:%M:%S %z %Y";

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("malformed JSON: {0}")]
    Malformed(String),
    #[error("schema error: {0}")]
    Schema(String),
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot open source {source_desc}: {err}")]
    Open { source_desc: String, err: io::Error },
    #[error("read error: {0}")]
    Read(#[from] io::Error),
    #[error("invalid source: {0}")]
    Config(String),
}

/// Parses one JSON document into a post. Missing profile counters default to 0
/// and are logged; missing `id`, `text` or `created_at` is a schema error.
pub fn parse_tweet(line: &str) -> Result<TweetRecord, ParseError> {
    let value: Value = serde_json::from_str(line).map_err(|e| ParseError::Malformed(e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| ParseError::Schema("top-level value is not an object".into()))?;

    let id = match obj.get("id_str").or_else(|| obj.get("id")) {
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => return Err(ParseError::Schema("missing `id`".into())),
    };
    let text = match obj.get("full_text").or_else(|| obj.get("text")) {
        Some(Value::String(s)) if !s.trim().is_empty() => s.clone(),
        Some(Value::String(_)) => return Err(ParseError::Schema(format!("empty `text` in post {id}"))),
        _ => return Err(ParseError::Schema(format!("missing `text` in post {id}"))),
    };
    let created_at = match obj.get("created_at") {
        Some(v) => parse_timestamp(v).map_err(|e| ParseError::Schema(format!("post {id}: {e}")))?,
        None => return Err(ParseError::Schema(format!("missing `created_at` in post {id}"))),
    };
    let label = match obj.get("label") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.parse::<ClassLabel>().map_err(ParseError::Schema)?),
        Some(other) => return Err(ParseError::Schema(format!("`label` must be a string, got {other}"))),
    };
    let is_retweet = obj.get("is_retweet").and_then(Value::as_bool).unwrap_or(false)
        || obj.get("retweeted_status").is_some_and(|v| !v.is_null());
    let is_reply = obj.get("is_reply").and_then(Value::as_bool).unwrap_or(false)
        || obj.get("in_reply_to_status_id").is_some_and(|v| !v.is_null());

    let user = match obj.get("user") {
        Some(Value::Object(u)) => parse_user(u, created_at, &id),
        _ => {
            log::warn!("post {id}: missing `user`, profile defaulted");
            UserProfile { account_created_at: created_at, ..Default::default() }
        }
    };

    Ok(TweetRecord { id, text, created_at, is_retweet, is_reply, user, label })
}

fn parse_user(u: &Map<String, Value>, tweet_time: EpochMillis, post_id: &str) -> UserProfile {
    let count = |key: &str| -> u64 {
        match u.get(key) {
            Some(Value::Number(n)) => n.as_u64().or_else(|| n.as_f64().filter(|f| *f >= 0.0).map(|f| f as u64)).unwrap_or_else(|| {
                log::warn!("post {post_id}: user.{key} is negative or non-integral, defaulted to 0");
                0
            }),
            Some(Value::String(s)) => s.parse().unwrap_or_else(|_| {
                log::warn!("post {post_id}: user.{key} is not numeric, defaulted to 0");
                0
            }),
            _ => {
                log::warn!("post {post_id}: user.{key} missing, defaulted to 0");
                0
            }
        }
    };
    let account_created_at = match u.get("created_at").map(parse_timestamp) {
        Some(Ok(t)) if t <= tweet_time => t,
        Some(Ok(_)) => {
            log::warn!("post {post_id}: account created after the post, clamped");
            tweet_time
        }
        _ => {
            log::warn!("post {post_id}: user.created_at missing or invalid, defaulted to post time");
            tweet_time
        }
    };
    let id = match u.get("id_str").or_else(|| u.get("id")) {
        Some(Value::String(s)) => Some(s.clone()),
        Some(Value::Number(n)) => Some(n.to_string()),
        _ => None,
    };
    UserProfile {
        id,
        account_created_at,
        statuses_count: count("statuses_count"),
        listed_count: count("listed_count"),
        followers_count: count("followers_count"),
        friends_count: count("friends_count"),
    }
}

/// 2006-01-01T00:00:00Z; earlier timestamps are rejected.
pub const MIN_TIMESTAMP_MS: EpochMillis = 1_136_073_600_000;

/// Accepts the Twitter layout, RFC 3339 / ISO-8601, or epoch milliseconds.
pub fn parse_timestamp(v: &Value) -> Result<EpochMillis, String> {
    let millis = match v {
        Value::Number(n) => n.as_i64().ok_or_else(|| format!("bad epoch timestamp {n}"))?,
        Value::String(s) => {
            if let Ok(t) = DateTime::parse_from_str(s, TWITTER_TIME_FORMAT) {
                t.timestamp_millis()
            } else if let Ok(t) = DateTime::parse_from_rfc3339(s) {
                t.timestamp_millis()
            } else if let Ok(t) = chrono::NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S") {
                t.and_utc().timestamp_millis()
            } else {
                return Err(format!("unparseable timestamp `{s}`"));
            }
        }
        other => return Err(format!("timestamp must be a string or number, got {other}")),
    };
    if millis < MIN_TIMESTAMP_MS {
        return Err(format!("timestamp {millis} predates 2006"));
    }
    Ok(millis)
}

/// Serializes a post in the wire format read by [`parse_tweet`].
pub fn to_json_line(t: &TweetRecord) -> String {
    let iso = |ms: EpochMillis| {
        DateTime::from_timestamp_millis(ms)
            .map(|d| d.format("%Y-%m-%dT%H:%M:%S%.3fZ").to_string())
            .unwrap_or_default()
    };
    let mut user = serde_json::json!({
        "created_at": iso(t.user.account_created_at),
        "statuses_count": t.user.statuses_count,
        "listed_count": t.user.listed_count,
        "followers_count": t.user.followers_count,
        "friends_count": t.user.friends_count,
    });
    if let Some(uid) = &t.user.id {
        user["id"] = Value::String(uid.clone());
    }
    let mut v = serde_json::json!({
        "id": t.id,
        "text": t.text,
        "created_at": iso(t.created_at),
        "is_retweet": t.is_retweet,
        "is_reply": t.is_reply,
        "user": user,
    });
    if let Some(l) = t.label {
        v["label"] = Value::String(l.as_str().to_string());
    }
    v.to_string()
}

/// Boxed source of raw lines.
pub type LineIter = Box<dyn Iterator<Item = io::Result<String>> + Send>;

/// Which of the two input streams a record came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    Unlabeled,
    Labeled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SourceKind {
    File(PathBuf),
    Stdin,
    /// Listens on the address and reads newline-delimited JSON from the first connection.
    TcpListener(String),
    Synthetic(SyntheticConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSource {
    pub kind: SourceKind,
    /// Posts per second; 0 means unthrottled.
    pub replay_rate: f64,
}

impl StreamSource {
    pub fn file(path: impl Into<PathBuf>) -> Self {
        Self { kind: SourceKind::File(path.into()), replay_rate: 0.0 }
    }

    pub fn with_rate(mut self, rate: f64) -> Self {
        self.replay_rate = rate;
        self
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if !(self.replay_rate >= 0.0) || !self.replay_rate.is_finite() {
            return Err(IngestError::Config(format!("replay rate must be >= 0, got {}", self.replay_rate)));
        }
        if let SourceKind::Synthetic(cfg) = &self.kind {
            cfg.validate().map_err(|e| IngestError::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Opens the source and returns a line iterator honoring the replay rate.
    pub fn open(&self) -> Result<Replay<LineIter>, IngestError> {
        self.validate()?;
        let lines: LineIter = match &self.kind {
            SourceKind::File(p) => {
                let f = std::fs::File::open(p)
                    .map_err(|err| IngestError::Open { source_desc: p.display().to_string(), err })?;
                Box::new(BufReader::new(f).lines())
            }
            SourceKind::Stdin => Box::new(BufReader::new(io::stdin()).lines()),
            SourceKind::TcpListener(addr) => {
                let addr = addr
                    .to_socket_addrs()
                    .map_err(|err| IngestError::Open { source_desc: addr.clone(), err })?
                    .next()
                    .ok_or_else(|| IngestError::Config(format!("address {addr} resolves to nothing")))?;
                let listener =
                    TcpListener::bind(addr).map_err(|err| IngestError::Open { source_desc: addr.to_string(), err })?;
                let (stream, _) =
                    listener.accept().map_err(|err| IngestError::Open { source_desc: addr.to_string(), err })?;
                Box::new(BufReader::new(stream).lines())
            }
            SourceKind::Synthetic(cfg) => {
                let tweets = generate_synthetic(cfg).map_err(|e| IngestError::Config(e.to_string()))?;
                Box::new(tweets.into_iter().map(|t| Ok(to_json_line(&t))))
            }
        };
        Ok(Replay::new(lines, self.replay_rate))
    }
}

/// Rate-limited pass-through over a line iterator. Line `i` is released no
/// earlier than `i / rate` seconds after the first one; blank lines are skipped
/// without consuming a slot.
pub struct Replay<I> {
    inner: I,
    rate: f64,
    start: Option<Instant>,
    emitted: u64,
}

impl<I: Iterator<Item = io::Result<String>>> Replay<I> {
    pub fn new(inner: I, rate: f64) -> Self {
        Self { inner, rate, start: None, emitted: 0 }
    }
}

impl<I: Iterator<Item = io::Result<String>>> Iterator for Replay<I> {
    type Item = io::Result<String>;

    fn next(&mut self) -> Option<Self::Item> {
        let line = loop {
            match self.inner.next()? {
                Ok(l) if l.trim().is_empty() => continue,
                other => break other,
            }
        };
        if self.rate > 0.0 {
            let start = *self.start.get_or_insert_with(Instant::now);
            let due = start + Duration::from_secs_f64(self.emitted as f64 / self.rate);
            let now = Instant::now();
            if due > now {
                thread::sleep(due - now);
            }
        }
        self.emitted += 1;
        Some(line)
    }
}

/// Running totals kept by a [`RecordReader`]; `emitted + skipped` equals the
/// number of non-blank input lines.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestCounters {
    pub emitted: u64,
    pub skipped: u64,
}

/// Turns raw lines into parsed records, counting and skipping bad ones.
pub struct RecordReader<I> {
    lines: I,
    pub counters: IngestCounters,
}

impl<I: Iterator<Item = io::Result<String>>> RecordReader<I> {
    pub fn new(lines: I) -> Self {
        Self { lines, counters: IngestCounters::default() }
    }
}

impl<I: Iterator<Item = io::Result<String>>> Iterator for RecordReader<I> {
    type Item = io::Result<TweetRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e)),
            };
            if line.trim().is_empty() {
                continue;
            }
            match parse_tweet(&line) {
                Ok(t) => {
                    self.counters.emitted += 1;
                    return Some(Ok(t));
                }
                Err(e) => {
                    log::debug!("skipping record: {e}");
                    self.counters.skipped += 1;
                }
            }
        }
    }
}

/// A raw line tagged with the stream it arrived on.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedLine {
    pub origin: Origin,
    pub line: String,
}

/// Merges several line sources into one channel in arrival order. Each source
/// is drained by its own producer thread.
pub fn multiplex(
    sources: Vec<(Origin, LineIter)>,
) -> mpsc::Receiver<io::Result<TaggedLine>> {
    let (tx, rx) = mpsc::sync_channel(4096);
    for (origin, lines) in sources {
        let tx = tx.clone();
        thread::spawn(move || {
            for line in lines {
                let item = line.map(|line| TaggedLine { origin, line });
                let stop = item.is_err();
                if tx.send(item).is_err() || stop {
                    break;
                }
            }
        });
    }
    rx
}
