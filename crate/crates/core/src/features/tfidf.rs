use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::vocab::Vocab;
use crate::error::{Error, Result};
use crate::text::{self, Tokenizer};

pub const DEFAULT_VOCABULARY_SIZE: usize = 100;

/// The most frequent crime-lexicon terms of the training tweets with their
/// smoothed inverse document frequencies over neighborhood documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrimeVocabulary {
    pub terms: Vocab,
    pub idf: Vec<f64>,
}

impl CrimeVocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Runs lexicon entries through the tweet pipeline so they match tweet
/// tokens; entries that normalise to more than two tokens are dropped.
pub fn normalize_lexicon(lexicon: &[String], tokenizer: &Tokenizer) -> BTreeSet<String> {
    lexicon
        .iter()
        .filter_map(|entry| {
            let toks = tokenizer.tokenize(entry);
            match toks.len() {
                1 | 2 => Some(toks.join(" ")),
                _ => None,
            }
        })
        .collect()
}

fn term_counts<'a>(tweets: impl IntoIterator<Item = &'a Vec<String>>, keep: impl Fn(&str) -> bool) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    for tokens in tweets {
        for t in tokens.iter().cloned().chain(text::bigrams(tokens)) {
            if keep(&t) {
                *counts.entry(t).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// Selects up to `max_terms` lexicon terms (unigrams or bigrams) by corpus
/// frequency, ties broken lexicographically, and computes
/// `idf = ln((1 + N) / (1 + df)) + 1` over the `N` neighborhood documents.
///
/// `docs` maps each neighborhood to its tokenised training tweets and
/// `lexicon` holds already-normalised terms.
pub fn build_crime_vocabulary(
    docs: &BTreeMap<String, Vec<Vec<String>>>,
    lexicon: &BTreeSet<String>,
    max_terms: usize,
) -> Result<CrimeVocabulary> {
    if lexicon.is_empty() {
        return Err(Error::invalid("crime lexicon is empty"));
    }
    let counts = term_counts(docs.values().flatten(), |t| lexicon.contains(t));
    if counts.is_empty() {
        return Err(Error::NoLexiconTerms);
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(max_terms);
    let terms: Vec<String> = ranked.into_iter().map(|(t, _)| t).collect();
    let vocab = Vocab::from(terms);

    let n_docs = docs.len() as f64;
    let mut df = vec![0usize; vocab.len()];
    for tweets in docs.values() {
        let present = term_counts(tweets, |t| vocab.id(t).is_some());
        for t in present.keys() {
            df[vocab.id(t).expect("filtered")] += 1;
        }
    }
    let idf = df
        .iter()
        .map(|&d| ((1.0 + n_docs) / (1.0 + d as f64)).ln() + 1.0)
        .collect();
    Ok(CrimeVocabulary { terms: vocab, idf })
}

/// TF-IDF of one neighborhood document (all its tweets together),
/// L2-normalised unless it is all zero.
pub fn tfidf_vector(tweets: &[Vec<String>], vocab: &CrimeVocabulary) -> Vec<f64> {
    let mut v = vec![0.0; vocab.len()];
    for (t, n) in term_counts(tweets, |t| vocab.terms.id(t).is_some()) {
        let i = vocab.terms.id(&t).expect("filtered");
        v[i] = n as f64 * vocab.idf[i];
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tweets(raw: &[&str]) -> Vec<Vec<String>> {
        raw.iter()
            .map(|d| d.split_whitespace().map(str::to_string).collect())
            .collect()
    }

    fn lex(terms: &[&str]) -> BTreeSet<String> {
        terms.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn ordered_by_frequency() {
        let mut docs = BTreeMap::new();
        docs.insert("A".to_string(), tweets(&["gun gun gun shoot", "gun gun"]));
        docs.insert("B".to_string(), tweets(&["shoot gun gun", "shoot"]));
        let v = build_crime_vocabulary(&docs, &lex(&["gun", "shoot"]), 100).unwrap();
        assert_eq!(v.terms.terms(), ["gun", "shoot"]);
    }

    #[test]
    fn caps_vocabulary_size() {
        let words: Vec<String> = (0..150).map(|i| format!("w{i:03}")).collect();
        let mut docs = BTreeMap::new();
        docs.insert("A".to_string(), vec![words.clone()]);
        let lexicon: BTreeSet<String> = words.iter().cloned().collect();
        let v = build_crime_vocabulary(&docs, &lexicon, DEFAULT_VOCABULARY_SIZE).unwrap();
        assert_eq!(v.len(), 100);
        // equal frequencies fall back to lexicographic order
        assert_eq!(v.terms.term(0), "w000");
    }

    #[test]
    fn idf_floor_for_ubiquitous_term() {
        let docs: BTreeMap<String, Vec<Vec<String>>> =
            (0..10).map(|i| (format!("n{i}"), tweets(&["gun"]))).collect();
        let v = build_crime_vocabulary(&docs, &lex(&["gun"]), 100).unwrap();
        assert!((v.idf[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bigram_terms_counted() {
        let mut docs = BTreeMap::new();
        docs.insert("A".to_string(), tweets(&["drive by shoot", "drive by"]));
        let v = build_crime_vocabulary(&docs, &lex(&["drive by"]), 100).unwrap();
        assert_eq!(v.terms.terms(), ["drive by"]);
    }

    #[test]
    fn no_overlap_errors() {
        let mut docs = BTreeMap::new();
        docs.insert("A".to_string(), tweets(&["pizza"]));
        assert!(matches!(
            build_crime_vocabulary(&docs, &lex(&["gun"]), 100),
            Err(Error::NoLexiconTerms)
        ));
    }

    fn fixed_vocab(terms: &[&str], idf: &[f64]) -> CrimeVocabulary {
        CrimeVocabulary {
            terms: Vocab::from(terms.iter().map(|s| s.to_string()).collect::<Vec<_>>()),
            idf: idf.to_vec(),
        }
    }

    #[test]
    fn vector_cases() {
        let v = fixed_vocab(&["gun", "rob"], &[1.0, 1.0]);
        assert_eq!(tfidf_vector(&tweets(&["pizza"]), &v), vec![0.0, 0.0]);
        assert_eq!(tfidf_vector(&tweets(&["gun", "gun"]), &v), vec![1.0, 0.0]);
        let x = tfidf_vector(&tweets(&["gun rob"]), &v);
        let h = std::f64::consts::SQRT_2 / 2.0;
        assert!((x[0] - h).abs() < 1e-15 && (x[1] - h).abs() < 1e-15);
    }

    #[test]
    fn lexicon_normalisation_uses_stemmer() {
        let t = Tokenizer::default();
        let lexicon = vec!["Shooting".to_string(), "drive by".to_string(), "the".to_string()];
        let n = normalize_lexicon(&lexicon, &t);
        assert!(n.contains("shoot"));
        assert!(n.contains("drive by") == !t.is_stopword("by"));
        assert!(!n.contains("the"));
    }
}
