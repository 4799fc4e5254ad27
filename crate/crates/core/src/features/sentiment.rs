use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::Tokenizer;

/// Maps a tokenised tweet to a polarity in [-1, 1]; 0 means no opinion.
pub trait SentimentScorer: Send + Sync {
    fn score(&self, tokens: &[String]) -> f64;
}

/// Averages the lexicon scores of the tweet's matched tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconScorer {
    pub terms: BTreeMap<String, f64>,
}

impl LexiconScorer {
    /// Lexicon keys are run through `tokenizer` so they match tweet tokens;
    /// keys that normalise to nothing (stopwords) are dropped and colliding
    /// keys averaged.
    pub fn new(lexicon: &BTreeMap<String, f64>, tokenizer: &Tokenizer) -> Result<Self> {
        let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for (term, &s) in lexicon {
            if !(-1.0..=1.0).contains(&s) {
                return Err(Error::invalid(format!("sentiment score {s} for {term:?} outside [-1, 1]")));
            }
            let toks = tokenizer.tokenize(term);
            if let [t] = toks.as_slice() {
                let e = acc.entry(t.clone()).or_insert((0.0, 0));
                e.0 += s;
                e.1 += 1;
            }
        }
        if acc.is_empty() {
            return Err(Error::invalid("sentiment lexicon has no usable terms"));
        }
        Ok(LexiconScorer {
            terms: acc.into_iter().map(|(t, (s, n))| (t, s / n as f64)).collect(),
        })
    }
}

impl SentimentScorer for LexiconScorer {
    fn score(&self, tokens: &[String]) -> f64 {
        let (sum, n) = tokens
            .iter()
            .filter_map(|t| self.terms.get(t))
            .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        if n == 0 {
            0.0
        } else {
            (sum / n as f64).clamp(-1.0, 1.0)
        }
    }
}

/// Mean of the scorers' nonzero outputs; `None` when none is nonzero or
/// the mean cancels to exactly 0.
pub fn tweet_sentiment(tokens: &[String], scorers: &[&dyn SentimentScorer]) -> Option<f64> {
    let nonzero: Vec<f64> = scorers.iter().map(|s| s.score(tokens)).filter(|&v| v != 0.0).collect();
    if nonzero.is_empty() {
        return None;
    }
    let mean = nonzero.iter().sum::<f64>() / nonzero.len() as f64;
    (mean != 0.0).then_some(mean)
}

/// Bin index for a determined score: [-1,-0.5], (-0.5,0), (0,0.5], (0.5,1].
pub fn sentiment_bin(s: f64) -> usize {
    if s <= -0.5 {
        0
    } else if s < 0.0 {
        1
    } else if s <= 0.5 {
        2
    } else {
        3
    }
}

/// Share of the neighborhood's tweets falling in each bin. Undetermined
/// tweets count toward the total, so the entries may sum to less than 1.
pub fn sentiment_distribution(tweets: &[Vec<String>], scorers: &[&dyn SentimentScorer]) -> Result<[f64; 4]> {
    if scorers.is_empty() {
        return Err(Error::invalid("at least one sentiment scorer is required"));
    }
    let mut bins = [0.0; 4];
    if tweets.is_empty() {
        return Ok(bins);
    }
    for t in tweets {
        if let Some(s) = tweet_sentiment(t, scorers) {
            bins[sentiment_bin(s)] += 1.0;
        }
    }
    let n = tweets.len() as f64;
    bins.iter_mut().for_each(|b| *b /= n);
    Ok(bins)
}
