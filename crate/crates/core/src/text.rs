//! Tweet tokenization: lowercasing, hashtag/handle/emoji preservation,
//! stopword removal and a small suffix-stripping stemmer.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are",
    "aren't", "as", "at", "be", "because", "been", "before", "being", "below", "between", "both",
    "but", "by", "can", "could", "couldn't", "did", "didn't", "do", "does", "doesn't", "doing",
    "don't", "down", "during", "each", "few", "for", "from", "further", "had", "hadn't", "has",
    "hasn't", "have", "haven't", "having", "he", "her", "here", "hers", "herself", "him",
    "himself", "his", "how", "i", "i'm", "if", "in", "into", "is", "isn't", "it", "it's", "its",
    "itself", "just", "let's", "me", "more", "most", "my", "myself", "no", "nor", "not", "now",
    "of", "off", "on", "once", "only", "or", "other", "our", "ours", "ourselves", "out", "over",
    "own", "rt", "same", "she", "should", "so", "some", "such", "than", "that", "that's", "the",
    "their", "theirs", "them", "themselves", "then", "there", "these", "they", "this", "those",
    "through", "to", "too", "under", "until", "up", "very", "was", "wasn't", "we", "were",
    "weren't", "what", "when", "where", "which", "while", "who", "whom", "why", "will", "with",
    "won't", "would", "you", "your", "yours", "yourself", "yourselves",
];

/// Settings shared by every consumer of tokenized text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenPipelineConfig {
    /// One stopword per line; the built-in English list when absent.
    pub stopword_file: Option<PathBuf>,
    /// `surface<TAB>lemma` overrides applied before stemming.
    pub lemma_file: Option<PathBuf>,
    /// Words seen in fewer documents are pruned from topic-model vocabularies.
    pub min_token_df: usize,
    /// Bigrams seen in fewer documents are not added as tokens.
    pub bigram_min_count: usize,
    /// Words seen in a larger fraction of documents are pruned.
    pub max_doc_fraction: f64,
}

impl Default for TokenPipelineConfig {
    fn default() -> Self {
        TokenPipelineConfig {
            stopword_file: None,
            lemma_file: None,
            min_token_df: 20,
            bigram_min_count: 20,
            max_doc_fraction: 0.5,
        }
    }
}

impl TokenPipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_doc_fraction > 0.0 && self.max_doc_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "max_doc_fraction must be in (0, 1], got {}",
                self.max_doc_fraction
            )));
        }
        Ok(())
    }
}

/// A loaded tokenizer. Cheap to share between threads.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    stopwords: HashSet<String>,
    lemmas: HashMap<String, String>,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer {
            stopwords: DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect(),
            lemmas: HashMap::new(),
        }
    }
}

fn token_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?x)
            https?://\S+
            | [\#@][\p{L}\p{N}_]+
            | \p{Extended_Pictographic}
            | [\p{L}\p{N}]+(?:'[\p{L}]+)*
            ",
        )
        .expect("token regex")
    })
}

impl Tokenizer {
    pub fn from_config(cfg: &TokenPipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let mut tok = Tokenizer::default();
        if let Some(path) = &cfg.stopword_file {
            tok.stopwords = read_lines(path)?.into_iter().map(|s| s.to_lowercase()).collect();
        }
        if let Some(path) = &cfg.lemma_file {
            tok.lemmas = read_lemmas(path)?;
        }
        Ok(tok)
    }

    pub fn with_stopwords(mut self, words: impl IntoIterator<Item = String>) -> Self {
        self.stopwords = words.into_iter().map(|w| w.to_lowercase()).collect();
        self
    }

    pub fn with_lemmas(mut self, lemmas: HashMap<String, String>) -> Self {
        self.lemmas = lemmas;
        self
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(word)
    }

    /// Lowercased surface tokens without stopword removal or stemming.
    /// URLs are dropped; hashtags, handles and emoji are kept whole.
    pub fn raw_tokens(&self, text: &str) -> Vec<String> {
        let lower = text.to_lowercase();
        token_regex()
            .find_iter(&lower)
            .map(|m| m.as_str())
            .filter(|t| !t.starts_with("http://") && !t.starts_with("https://"))
            .map(str::to_string)
            .collect()
    }

    /// Full pipeline: raw tokens, stopwords removed, then lemmatized or stemmed.
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        self.raw_tokens(text)
            .into_iter()
            .filter(|t| !self.stopwords.contains(t))
            .map(|t| self.normalize(&t))
            .filter(|t| !t.is_empty())
            .collect()
    }

    /// Lemma override or stem of a single lowercased token.
    pub fn normalize(&self, token: &str) -> String {
        if let Some(lemma) = self.lemmas.get(token) {
            return lemma.clone();
        }
        stem(token)
    }
}

/// Adds `w1 w2` bigrams of adjacent tokens after the unigrams.
pub fn with_bigrams(tokens: &[String]) -> Vec<String> {
    let mut out = tokens.to_vec();
    out.extend(bigrams(tokens));
    out
}

pub fn bigrams(tokens: &[String]) -> impl Iterator<Item = String> + '_ {
    tokens.windows(2).map(|w| format!("{} {}", w[0], w[1]))
}

fn is_vowel(c: u8) -> bool {
    matches!(c, b'a' | b'e' | b'i' | b'o' | b'u')
}

fn has_vowel(s: &str) -> bool {
    s.bytes().any(|c| is_vowel(c) || c == b'y')
}

/// Suffix stripper for plain ASCII words. Rules, first match wins:
/// possessive `'s` dropped; `sses`→`ss`; `ies`→`y`; `ing`/`ed` removed when
/// the stem keeps a vowel and at least three letters, undoubling a final
/// double consonant other than l, s, z; a plural `s` removed unless
/// preceded by `s`, `u` or `i`. Hashtags, handles, emoji and tokens with
/// digits or non-ASCII letters pass through unchanged.
pub fn stem(token: &str) -> String {
    if token.starts_with('#')
        || token.starts_with('@')
        || !token.bytes().all(|c| c.is_ascii_lowercase() || c == b'\'')
    {
        return token.to_string();
    }
    let word = token.strip_suffix("'s").unwrap_or(token);
    let word = word.trim_matches('\'');
    if word.len() <= 3 {
        return word.to_string();
    }
    if let Some(base) = word.strip_suffix("sses") {
        return format!("{base}ss");
    }
    if let Some(base) = word.strip_suffix("ies") {
        if base.len() >= 2 {
            return format!("{base}y");
        }
    }
    for suffix in ["ing", "ed"] {
        if let Some(base) = word.strip_suffix(suffix) {
            if base.len() >= 3 && has_vowel(base) {
                return undouble(base);
            }
        }
    }
    if let Some(base) = word.strip_suffix('s') {
        if base.len() >= 3 && !base.ends_with(['s', 'u', 'i']) {
            return base.to_string();
        }
    }
    word.to_string()
}

fn undouble(base: &str) -> String {
    let b = base.as_bytes();
    let n = b.len();
    if n >= 2 && b[n - 1] == b[n - 2] && !is_vowel(b[n - 1]) && !matches!(b[n - 1], b'l' | b's' | b'z') {
        base[..n - 1].to_string()
    } else {
        base.to_string()
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

fn read_lemmas(path: &Path) -> Result<HashMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (surface, lemma) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: "expected `surface<TAB>lemma`".into(),
        })?;
        map.insert(surface.trim().to_lowercase(), lemma.trim().to_lowercase());
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tweet_golden() {
        let t = Tokenizer::default();
        assert_eq!(
            t.tokenize("Shooting near #ShortNorth @cpd!"),
            vec!["shoot", "near", "#shortnorth", "@cpd"]
        );
    }

    #[test]
    fn empty_and_stopwords() {
        let t = Tokenizer::default();
        assert!(t.tokenize("").is_empty());
        assert!(t.tokenize("The the THE").is_empty());
    }

    #[test]
    fn emoji_and_urls() {
        let t = Tokenizer::default();
        assert_eq!(
            t.tokenize("pizza🍕 tonight https://t.co/xyz"),
            vec!["pizza", "🍕", "tonight"]
        );
    }

    #[test]
    fn stemmer_rules() {
        for (w, s) in [
            ("shooting", "shoot"),
            ("robbed", "rob"),
            ("shopping", "shop"),
            ("parties", "party"),
            ("guns", "gun"),
            ("classes", "class"),
            ("bus", "bus"),
            ("status", "status"),
            ("police's", "police"),
            ("thing", "thing"),
            ("red", "red"),
            ("calling", "call"),
            ("2020s", "2020s"),
        ] {
            assert_eq!(stem(w), s, "{w}");
        }
    }

    #[test]
    fn lemma_override_wins() {
        let t = Tokenizer::default().with_lemmas([("ran".to_string(), "run".to_string())].into());
        assert_eq!(t.tokenize("ran"), vec!["run"]);
    }

    #[test]
    fn bigram_layout() {
        let toks: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        assert_eq!(with_bigrams(&toks), vec!["a", "b", "c", "a b", "b c"]);
    }
}
