//! Pairwise local ranking: labelled ordered-pair datasets, 3-class
//! classifiers over them, and aggregation of predicted local ranks into a
//! global weak ordering.

pub mod forest;
pub mod grid;
pub mod logreg;
pub mod mlp;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::EfficacyTable;
use crate::error::{Error, Result};
use crate::features::spatial::PairContext;
use crate::features::{assemble_pair_vector, FeatureMask, NeighborhoodFeatures};
use crate::metrics::ScoreMatrix;

pub use forest::{ForestConfig, RandomForest};
pub use grid::{grid_search, macro_f1, GridSpec};
pub use logreg::{LogRegConfig, LogisticRegression};
pub use mlp::{Mlp, MlpConfig};

/// Class index used by every classifier: 0 ↦ −1, 1 ↦ 0, 2 ↦ +1.
pub const N_CLASSES: usize = 3;

pub fn label_to_class(label: i8) -> usize {
    (label + 1) as usize
}

pub fn class_to_label(class: usize) -> i8 {
    class as i8 - 1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TieSpec {
    pub coefficient: f64,
    pub sigma: f64,
    pub threshold: f64,
}

impl TieSpec {
    pub fn new(coefficient: f64, sigma: f64) -> Result<Self> {
        if !(coefficient >= 0.0) || !(sigma >= 0.0) {
            return Err(Error::invalid(format!(
                "tie coefficient {coefficient} and sigma {sigma} must be non-negative"
            )));
        }
        Ok(TieSpec {
            coefficient,
            sigma,
            threshold: coefficient * sigma,
        })
    }
}

/// +1 when `ei` is ahead of `ej` by more than the threshold, −1 when behind
/// by more, 0 otherwise.
pub fn pair_label(ei: f64, ej: f64, threshold: f64) -> i8 {
    if (ei - ej).abs() <= threshold {
        0
    } else if ei > ej {
        1
    } else {
        -1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairInstance {
    pub i: String,
    pub j: String,
    pub x: Vec<f64>,
    pub label: i8,
}

/// Builds the pair vector of an ordered pair from cached features.
pub struct PairVectorizer<'a> {
    pub features: &'a BTreeMap<String, NeighborhoodFeatures>,
    pub context: &'a PairContext,
    pub mask: &'a FeatureMask,
}

impl PairVectorizer<'_> {
    pub fn vector(&self, i: &str, j: &str) -> Result<Vec<f64>> {
        let fi = self.features.get(i).ok_or_else(|| Error::UnknownNeighborhood(i.to_string()))?;
        let fj = self.features.get(j).ok_or_else(|| Error::UnknownNeighborhood(j.to_string()))?;
        assemble_pair_vector(fi, fj, &self.context.pair_features(i, j)?, self.mask)
    }
}

/// Emits `(i, j, r)` and `(j, i, −r)` for every unordered pair of `active`,
/// `m(m−1)` instances in all.
pub fn build_pairs(
    active: &[String],
    vectorizer: &PairVectorizer<'_>,
    efficacy: &EfficacyTable,
    tie: &TieSpec,
) -> Result<Vec<PairInstance>> {
    if active.len() < 2 {
        return Err(Error::invalid("at least two neighborhoods are needed to form pairs"));
    }
    let values = efficacy.restrict(active)?;
    let mut unordered = Vec::with_capacity(active.len() * (active.len() - 1) / 2);
    for a in 0..active.len() {
        for b in a + 1..active.len() {
            unordered.push((a, b));
        }
    }
    let nested: Vec<[PairInstance; 2]> = unordered
        .par_iter()
        .map(|&(a, b)| {
            let (i, j) = (&active[a], &active[b]);
            let r = pair_label(values[i], values[j], tie.threshold);
            Ok([
                PairInstance {
                    i: i.clone(),
                    j: j.clone(),
                    x: vectorizer.vector(i, j)?,
                    label: r,
                },
                PairInstance {
                    i: j.clone(),
                    j: i.clone(),
                    x: vectorizer.vector(j, i)?,
                    label: -r,
                },
            ])
        })
        .collect::<Result<_>>()?;
    Ok(nested.into_iter().flatten().collect())
}

/// Design matrix and class indices of a pair dataset.
pub fn to_dataset(pairs: &[PairInstance]) -> Result<(Array2<f64>, Vec<usize>)> {
    let d = pairs.first().map_or(0, |p| p.x.len());
    let mut flat = Vec::with_capacity(pairs.len() * d);
    for p in pairs {
        if p.x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: p.x.len(),
            });
        }
        flat.extend_from_slice(&p.x);
    }
    let x = Array2::from_shape_vec((pairs.len(), d), flat).expect("shape checked");
    let y = pairs.iter().map(|p| label_to_class(p.label)).collect();
    Ok((x, y))
}

/// Column means and standard deviations; constant columns keep scale 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Array2<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mut mean = vec![0.0; x.ncols()];
        let mut scale = vec![0.0; x.ncols()];
        for (c, col) in x.columns().into_iter().enumerate() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean[c] = m;
            scale[c] = if var > 1e-24 { var.sqrt() } else { 1.0 };
        }
        Standardizer { mean, scale }
    }

    pub fn transform(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[c]) / self.scale[c];
            }
        }
        out
    }

    pub fn transform_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(c, v)| (v - self.mean[c]) / self.scale[c])
            .collect()
    }
}

pub(crate) fn check_classes(y: &[usize]) -> Result<()> {
    let mut seen = [false; N_CLASSES];
    for &c in y {
        seen[c] = true;
    }
    if seen.iter().filter(|s| **s).count() < 2 {
        return Err(Error::DegenerateLabels(format!(
            "{} instance(s) with a single class",
            y.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    Logreg,
    Forest,
    Mlp,
}

impl ClassifierKind {
    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Logreg => "logreg",
            ClassifierKind::Forest => "forest",
            ClassifierKind::Mlp => "mlp",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "logreg" | "logistic" => Ok(ClassifierKind::Logreg),
            "forest" | "random-forest" => Ok(ClassifierKind::Forest),
            "mlp" => Ok(ClassifierKind::Mlp),
            other => Err(Error::invalid(format!("unknown classifier {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RankerConfig {
    pub logreg: LogRegConfig,
    pub forest: ForestConfig,
    pub mlp: MlpConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrainedRanker {
    Logreg(LogisticRegression),
    Forest(RandomForest),
    Mlp(Mlp),
}

/// Fits a classifier of `kind` on the pair dataset.
pub fn train(pairs: &[PairInstance], kind: ClassifierKind, cfg: &RankerConfig, seed: u64) -> Result<TrainedRanker> {
    let (x, y) = to_dataset(pairs)?;
    train_matrix(&x, &y, kind, cfg, seed)
}

pub fn train_matrix(
    x: &Array2<f64>,
    y: &[usize],
    kind: ClassifierKind,
    cfg: &RankerConfig,
    seed: u64,
) -> Result<TrainedRanker> {
    if x.nrows() == 0 || x.nrows() != y.len() {
        return Err(Error::invalid("training set is empty or misaligned"));
    }
    check_classes(y)?;
    Ok(match kind {
        ClassifierKind::Logreg => TrainedRanker::Logreg(LogisticRegression::fit(x, y, &cfg.logreg)?),
        ClassifierKind::Forest => TrainedRanker::Forest(RandomForest::fit(x, y, &cfg.forest, seed)?),
        ClassifierKind::Mlp => TrainedRanker::Mlp(Mlp::fit(x, y, &cfg.mlp, seed)?),
    })
}

impl TrainedRanker {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            TrainedRanker::Logreg(_) => ClassifierKind::Logreg,
            TrainedRanker::Forest(_) => ClassifierKind::Forest,
            TrainedRanker::Mlp(_) => ClassifierKind::Mlp,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            TrainedRanker::Logreg(m) => m.input_dim(),
            TrainedRanker::Forest(m) => m.input_dim(),
            TrainedRanker::Mlp(m) => m.input_dim(),
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<[f64; N_CLASSES]> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(match self {
            TrainedRanker::Logreg(m) => m.predict_proba(x),
            TrainedRanker::Forest(m) => m.predict_proba(x),
            TrainedRanker::Mlp(m) => m.predict_proba(x),
        })
    }

    /// Hard local rank in {−1, 0, +1}; probability ties go to the lower class.
    pub fn predict(&self, x: &[f64]) -> Result<i8> {
        Ok(class_to_label(argmax(&self.predict_proba(x)?)))
    }

    pub fn predict_matrix(&self, x: &Array2<f64>) -> Result<Vec<usize>> {
        x.rows()
            .into_iter()
            .map(|r| {
                let row: Vec<f64> = r.to_vec();
                self.predict_proba(&row).map(|p| argmax(&p))
            })
            .collect()
    }
}

pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

/// How a predicted pair contributes to the global score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreMode {
    /// The predicted class label.
    #[default]
    Hard,
    /// The expected label under the predicted class probabilities.
    Soft,
}

impl FromStr for ScoreMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(ScoreMode::Hard),
            "soft" => Ok(ScoreMode::Soft),
            other => Err(Error::invalid(format!("unknown score mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingResult {
    /// `C(n_i)`; integral in hard mode.
    pub scores: BTreeMap<String, f64>,
    pub ordering: ScoreMatrix,
}

impl RankingResult {
    /// Weak ordering from scores: ahead when greater, tied when equal.
    pub fn from_scores(scores: BTreeMap<String, f64>) -> Self {
        let ids: Vec<String> = scores.keys().cloned().collect();
        let vals: Vec<f64> = scores.values().copied().collect();
        let ordering = ScoreMatrix::from_relation(ids, |i, j| vals[i] >= vals[j]);
        RankingResult { scores, ordering }
    }

    /// `(id, score, rank)` sorted by rank then id; equal scores share the
    /// smallest rank.
    pub fn ranked(&self) -> Vec<(String, f64, usize)> {
        let mut rows: Vec<(String, f64)> = self.scores.iter().map(|(k, v)| (k.clone(), *v)).collect();
        rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut out = Vec::with_capacity(rows.len());
        for (pos, (id, s)) in rows.iter().enumerate() {
            let rank = match out.last() {
                Some((_, prev, r)) if *prev == *s => *r,
                _ => pos + 1,
            };
            out.push((id.clone(), *s, rank));
        }
        out
    }
}

/// `C(n_i) = Σ_{j≠i} R(n_i, n_j)` from a local-rank function over ordered
/// pairs, evaluated in parallel.
pub fn aggregate_local_ranks(
    active: &[String],
    local: impl Fn(&str, &str) -> Result<f64> + Sync,
) -> Result<RankingResult> {
    if active.len() < 2 {
        return Err(Error::invalid("at least two neighborhoods are needed to rank"));
    }
    let scores: Vec<f64> = active
        .par_iter()
        .map(|i| {
            active
                .iter()
                .filter(|j| *j != i)
                .map(|j| local(i, j))
                .sum::<Result<f64>>()
        })
        .collect::<Result<_>>()?;
    Ok(RankingResult::from_scores(active.iter().cloned().zip(scores).collect()))
}

/// Ranks the active set with a trained model.
pub fn rank_globally(
    model: &TrainedRanker,
    active: &[String],
    vectorizer: &PairVectorizer<'_>,
    mode: ScoreMode,
) -> Result<RankingResult> {
    aggregate_local_ranks(active, |i, j| {
        let x = vectorizer.vector(i, j)?;
        match mode {
            ScoreMode::Hard => model.predict(&x).map(f64::from),
            ScoreMode::Soft => model.predict_proba(&x).map(|p| p[2] - p[0]),
        }
    })
}
