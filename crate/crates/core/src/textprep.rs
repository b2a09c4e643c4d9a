//! Tweet text cleaning.
//!
//! Cleaning runs a fixed sequence of removals: URLs, user mentions, hashtags,
//! a leading `RT`, digits, then every remaining character that is not a letter
//! or whitespace. Whitespace runs are condensed and the result trimmed. Case is
//! preserved; the uppercase-word feature depends on it.
//!
//! Sentence boundaries (`.`, `!`, `?`) are taken from the raw text, after URL
//! removal only, so that punctuation-based stylistic features survive cleaning.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

static URL_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)https?://\S*|\bt\.co/\S*").unwrap());
static MENTION_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"@\w+").unwrap());
static HASHTAG_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"#\w+").unwrap());
// Any number of leading "RT" tokens, possibly behind non-letter noise such as "123 " or ": ".
static LEADING_RT_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(?:[^\p{Alphabetic}]*\bRT\b)+").unwrap());
static SENTENCE_END_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[.!?]+").unwrap());

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanedText {
    pub raw: String,
    pub cleaned: String,
    pub tokens: Vec<String>,
    pub sentences: Vec<Vec<String>>,
}

impl CleanedText {
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Applies the full cleaning sequence to `text`.
pub fn clean(text: &str) -> CleanedText {
    let cleaned = clean_str(text);
    let tokens = split_tokens(&cleaned);
    let no_urls = URL_RE.replace_all(text, " ");
    let sentences = segment(text, &no_urls, &tokens, clean_str);
    CleanedText { raw: text.to_string(), cleaned, tokens, sentences }
}

/// Tokenization without cleaning, used when preprocessing is switched off.
pub fn passthrough(text: &str) -> CleanedText {
    let tokens = split_tokens(text);
    let sentences = segment(text, text, &tokens, |s| s.to_string());
    CleanedText { raw: text.to_string(), cleaned: tokens.join(" "), tokens, sentences }
}

fn split_tokens(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn segment(raw: &str, source: &str, tokens: &[String], clean_segment: impl Fn(&str) -> String) -> Vec<Vec<String>> {
    let mut sentences: Vec<Vec<String>> = SENTENCE_END_RE
        .split(source)
        .filter(|seg| seg.chars().any(char::is_alphabetic))
        .map(|seg| split_tokens(&clean_segment(seg)))
        .collect();
    if sentences.is_empty() && raw.chars().any(char::is_alphabetic) {
        sentences.push(tokens.to_vec());
    }
    sentences
}

fn clean_str(text: &str) -> String {
    let s = URL_RE.replace_all(text, " ");
    let s = MENTION_RE.replace_all(&s, " ");
    let s = HASHTAG_RE.replace_all(&s, " ");
    let s = LEADING_RT_RE.replace(&s, " ");

    let mut out = String::with_capacity(s.len());
    let mut pending_space = false;
    for c in s.chars() {
        if c.is_numeric() || c == '\'' || c == '\u{2019}' {
            // dropped in place: "don't" -> "dont", "abc123" -> "abc"
            continue;
        }
        if c.is_alphabetic() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(c);
        } else {
            pending_space = true;
        }
    }
    // "RT" can surface only after digit/symbol removal, e.g. "RT123 hi".
    let mut rest = out.as_str();
    while let Some(tail) = rest.strip_prefix("RT") {
        if tail.is_empty() {
            rest = tail;
        } else if let Some(t) = tail.strip_prefix(' ') {
            rest = t;
        } else {
            break;
        }
    }
    if rest.len() != out.len() {
        out = rest.to_string();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn full_rule_chain() {
        let c = clean("RT @bob Check https://t.co/x #fail 100%!!!");
        assert_eq!(c.cleaned, "Check");
        assert_eq!(c.tokens, vec!["Check"]);
    }

    #[test]
    fn empty_and_plain() {
        let c = clean("");
        assert_eq!(c.cleaned, "");
        assert!(c.tokens.is_empty());
        assert!(c.sentences.is_empty());
        assert_eq!(clean("hello world").cleaned, "hello world");
    }

    #[test]
    fn case_and_unicode_letters_preserved() {
        assert_eq!(clean("WHAT a DAY").cleaned, "WHAT a DAY");
        assert_eq!(clean("ça va, señor?").cleaned, "ça va señor");
    }

    #[test]
    fn rt_only_removed_when_leading() {
        assert_eq!(clean("RT RT hello RT").cleaned, "hello RT");
        assert_eq!(clean(". RT hi").cleaned, "hi");
        assert_eq!(clean("RTX rocks").cleaned, "RTX rocks");
    }

    #[test]
    fn sentences_come_from_raw_punctuation() {
        let c = clean("Hi there. Go away.");
        assert_eq!(c.sentences, vec![vec!["Hi", "there"], vec!["Go", "away"]]);
        // the dot in a URL is not a sentence boundary
        let c = clean("look http://t.co/abc now");
        assert_eq!(c.sentences.len(), 1);
    }

    #[test]
    fn letter_only_in_url_still_yields_a_sentence() {
        let c = clean("http://t.co/abc");
        assert_eq!(c.cleaned, "");
        assert_eq!(c.sentences.len(), 1);
    }

    #[test]
    fn passthrough_keeps_symbols() {
        let c = passthrough("RT @bob hi #x");
        assert_eq!(c.tokens, vec!["RT", "@bob", "hi", "#x"]);
    }

    proptest! {
        #[test]
        fn idempotent(s in "\\PC{0,80}") {
            let once = clean(&s).cleaned;
            prop_assert_eq!(clean(&once).cleaned, once.clone());
        }

        #[test]
        fn output_alphabet(s in "\\PC{0,80}") {
            let c = clean(&s);
            prop_assert!(c.cleaned.chars().all(|ch| ch.is_alphabetic() || ch == ' '));
            prop_assert!(!c.cleaned.contains("  "));
            prop_assert_eq!(c.tokens.join(" "), c.cleaned);
        }

        #[test]
        fn sentence_exists_when_letters(s in "[a-zA-Z .!?#@0-9]{0,60}") {
            let c = clean(&s);
            if s.chars().any(char::is_alphabetic) {
                prop_assert!(!c.sentences.is_empty());
            }
        }
    }
}
