//! Per-neighborhood feature blocks (crime-term TF-IDF, topic mixture,
//! document embedding, sentiment histogram), pairwise features, and the
//! layout of the vector a ranker sees for an ordered pair.

pub mod embed;
pub mod lda;
pub mod sentiment;
pub mod spatial;
pub mod tfidf;
pub mod vocab;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use spatial::PairFeatures;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureFamily {
    Tfidf,
    Topics,
    Embedding,
    Sentiment,
    Distance,
    CommonUsers,
}

impl FeatureFamily {
    pub const ALL: [FeatureFamily; 6] = [
        FeatureFamily::Tfidf,
        FeatureFamily::Topics,
        FeatureFamily::Embedding,
        FeatureFamily::Sentiment,
        FeatureFamily::Distance,
        FeatureFamily::CommonUsers,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureFamily::Tfidf => "tfidf",
            FeatureFamily::Topics => "topics",
            FeatureFamily::Embedding => "doc2vec",
            FeatureFamily::Sentiment => "sentiment",
            FeatureFamily::Distance => "distance",
            FeatureFamily::CommonUsers => "common-users",
        }
    }
}

impl FromStr for FeatureFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "tfidf" | "tf-idf" => FeatureFamily::Tfidf,
            "topics" | "lda" => FeatureFamily::Topics,
            "doc2vec" | "embedding" => FeatureFamily::Embedding,
            "sentiment" => FeatureFamily::Sentiment,
            "distance" => FeatureFamily::Distance,
            "common-users" | "users" => FeatureFamily::CommonUsers,
            other => return Err(Error::invalid(format!("unknown feature family {other:?}"))),
        })
    }
}

/// The set of enabled feature families.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct FeatureMask(BTreeSet<FeatureFamily>);

impl FeatureMask {
    pub fn all() -> Self {
        FeatureMask(FeatureFamily::ALL.into_iter().collect())
    }

    pub fn new(families: impl IntoIterator<Item = FeatureFamily>) -> Result<Self> {
        let set: BTreeSet<_> = families.into_iter().collect();
        if set.is_empty() {
            return Err(Error::invalid("feature mask enables no family"));
        }
        Ok(FeatureMask(set))
    }

    pub fn contains(&self, f: FeatureFamily) -> bool {
        self.0.contains(&f)
    }

    pub fn families(&self) -> impl Iterator<Item = FeatureFamily> + '_ {
        self.0.iter().copied()
    }

    pub fn needs_text(&self) -> bool {
        self.families()
            .any(|f| !matches!(f, FeatureFamily::Distance | FeatureFamily::CommonUsers))
    }
}

impl Default for FeatureMask {
    fn default() -> Self {
        FeatureMask::all()
    }
}

impl FromStr for FeatureMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "all" {
            return Ok(FeatureMask::all());
        }
        FeatureMask::new(
            s.split(',')
                .filter(|p| !p.trim().is_empty())
                .map(FeatureFamily::from_str)
                .collect::<Result<Vec<_>>>()?,
        )
    }
}

impl fmt::Display for FeatureMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.families().map(FeatureFamily::name).collect();
        f.write_str(&names.join(","))
    }
}

impl From<FeatureMask> for String {
    fn from(m: FeatureMask) -> Self {
        m.to_string()
    }
}

impl TryFrom<String> for FeatureMask {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Per-neighborhood blocks. Flags mark fallbacks taken when no token was in
/// the topic or embedding vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodFeatures {
    pub neighborhood_id: String,
    pub tfidf: Vec<f64>,
    pub topics: Vec<f64>,
    pub embedding: Vec<f64>,
    pub sentiment: [f64; 4],
    #[serde(default)]
    pub topics_fallback: bool,
    #[serde(default)]
    pub embedding_fallback: bool,
}

impl NeighborhoodFeatures {
    fn dims(&self) -> [usize; 4] {
        [self.tfidf.len(), self.topics.len(), self.embedding.len(), self.sentiment.len()]
    }

    fn extend_into(&self, mask: &FeatureMask, out: &mut Vec<f64>) {
        if mask.contains(FeatureFamily::Tfidf) {
            out.extend_from_slice(&self.tfidf);
        }
        if mask.contains(FeatureFamily::Topics) {
            out.extend_from_slice(&self.topics);
        }
        if mask.contains(FeatureFamily::Embedding) {
            out.extend_from_slice(&self.embedding);
        }
        if mask.contains(FeatureFamily::Sentiment) {
            out.extend_from_slice(&self.sentiment);
        }
    }

    fn block_len(&self, mask: &FeatureMask) -> usize {
        let d = self.dims();
        [FeatureFamily::Tfidf, FeatureFamily::Topics, FeatureFamily::Embedding, FeatureFamily::Sentiment]
            .iter()
            .zip(d)
            .filter(|(f, _)| mask.contains(**f))
            .map(|(_, n)| n)
            .sum()
    }
}

/// Length of the assembled vector for features with the given block sizes.
pub fn pair_vector_len(sample: &NeighborhoodFeatures, mask: &FeatureMask) -> usize {
    let pairwise = [FeatureFamily::Distance, FeatureFamily::CommonUsers]
        .iter()
        .filter(|f| mask.contains(**f))
        .count();
    2 * sample.block_len(mask) + pairwise
}

/// `[blocks of i] ++ [blocks of j] ++ [distance, common users]`, blocks in
/// the order tfidf, topics, embedding, sentiment, disabled families left
/// out on both sides.
pub fn assemble_pair_vector(
    fi: &NeighborhoodFeatures,
    fj: &NeighborhoodFeatures,
    pf: &PairFeatures,
    mask: &FeatureMask,
) -> Result<Vec<f64>> {
    if fi.dims() != fj.dims() {
        return Err(Error::invalid(format!(
            "feature blocks of {} {:?} and {} {:?} differ in size",
            fi.neighborhood_id,
            fi.dims(),
            fj.neighborhood_id,
            fj.dims()
        )));
    }
    let mut out = Vec::with_capacity(pair_vector_len(fi, mask));
    fi.extend_into(mask, &mut out);
    fj.extend_into(mask, &mut out);
    if mask.contains(FeatureFamily::Distance) {
        out.push(pf.distance_norm);
    }
    if mask.contains(FeatureFamily::CommonUsers) {
        out.push(pf.common_users);
    }
    Ok(out)
}
