use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text;

/// Ordered term list with a lookup index. Serialises as the bare term list
/// so artifacts are byte-stable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    terms: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(terms: Vec<String>) -> Self {
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { terms, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.terms
    }
}

impl Vocab {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn id(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, id: usize) -> &str {
        &self.terms[id]
    }

    /// Maps tokens to ids, dropping out-of-vocabulary tokens.
    pub fn encode<'a>(&self, tokens: impl IntoIterator<Item = &'a String>) -> Vec<usize> {
        tokens.into_iter().filter_map(|t| self.id(t)).collect()
    }
}

/// Pruned vocabulary for topic models and embeddings, following the usual
/// tweet preprocessing: frequent bigrams become tokens, then rare and
/// overly common words are removed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneConfig {
    pub min_df: usize,
    pub max_doc_fraction: f64,
    pub bigram_min_count: usize,
}

impl PruneConfig {
    /// No pruning and no bigrams.
    pub fn keep_all() -> Self {
        PruneConfig {
            min_df: 0,
            max_doc_fraction: 1.0,
            bigram_min_count: usize::MAX,
        }
    }
}

/// A document set expressed over a pruned vocabulary.
#[derive(Debug, Clone)]
pub struct EncodedCorpus {
    pub vocab: Vocab,
    pub docs: Vec<Vec<usize>>,
}

/// Builds a pruned vocabulary from tokenised documents and encodes them.
/// Bigrams whose document frequency reaches `bigram_min_count` join the
/// candidate set; every candidate then needs `df >= min_df` and
/// `df <= max_doc_fraction * D`. Documents left empty are dropped.
pub fn build_vocab(docs: &[Vec<String>], cfg: PruneConfig) -> Result<Vocab> {
    if docs.is_empty() {
        return Err(Error::invalid("empty corpus"));
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    let mut bigram_df: BTreeMap<String, usize> = BTreeMap::new();
    for doc in docs {
        let mut uniq: Vec<&String> = doc.iter().collect();
        uniq.sort();
        uniq.dedup();
        for t in uniq {
            *df.entry(t.clone()).or_default() += 1;
        }
        if cfg.bigram_min_count != usize::MAX {
            let mut bg: Vec<String> = text::bigrams(doc).collect();
            bg.sort();
            bg.dedup();
            for b in bg {
                *bigram_df.entry(b).or_default() += 1;
            }
        }
    }
    for (b, n) in bigram_df {
        if n >= cfg.bigram_min_count {
            df.insert(b, n);
        }
    }
    let max_df = cfg.max_doc_fraction * docs.len() as f64;
    let terms: Vec<String> = df
        .into_iter()
        .filter(|(_, n)| *n >= cfg.min_df && (*n as f64) <= max_df + 1e-9)
        .map(|(t, _)| t)
        .collect();
    if terms.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    Ok(Vocab::from(terms))
}

/// Encodes a document (unigrams then bigrams) against a vocabulary.
pub fn encode_doc(vocab: &Vocab, doc: &[String]) -> Vec<usize> {
    let mut ids = vocab.encode(doc);
    for b in text::bigrams(doc) {
        if let Some(id) = vocab.id(&b) {
            ids.push(id);
        }
    }
    ids
}

pub fn encode_corpus(docs: &[Vec<String>], cfg: PruneConfig) -> Result<EncodedCorpus> {
    let vocab = build_vocab(docs, cfg)?;
    let docs: Vec<Vec<usize>> = docs
        .iter()
        .map(|d| encode_doc(&vocab, d))
        .filter(|d| !d.is_empty())
        .collect();
    if docs.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    Ok(EncodedCorpus { vocab, docs })
}
