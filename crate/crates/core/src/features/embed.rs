//! Paragraph vectors in the distributed bag-of-words form: each document
//! vector is trained to predict the document's words against sampled
//! negatives. Inference fits a fresh document vector with word-side
//! weights frozen.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::vocab::{encode_corpus, encode_doc, PruneConfig, Vocab};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedConfig {
    pub dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub min_lr: f64,
    pub negatives: usize,
    /// Epochs used when inferring a vector for an unseen document.
    pub infer_epochs: usize,
    pub seed: u64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            dim: 50,
            epochs: 20,
            lr: 0.025,
            min_lr: 0.0001,
            negatives: 5,
            infer_epochs: 20,
            seed: 0,
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.epochs == 0 || self.infer_epochs == 0 {
            return Err(Error::Config("embedding dim and epochs must be positive".into()));
        }
        if !(self.lr > 0.0) || self.min_lr < 0.0 || self.min_lr > self.lr {
            return Err(Error::Config("embedding learning rates must satisfy 0 <= min_lr <= lr, lr > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocEmbedder {
    pub vocab: Vocab,
    pub config: EmbedConfig,
    /// Row-major `|vocab| × dim` output weights.
    output: Vec<f64>,
    /// Unigram counts raised to 0.75, the negative-sampling weights.
    noise: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn init_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let half = 0.5 / dim as f64;
    (0..dim).map(|_| rng.random_range(-half..half)).collect()
}

struct Step<'a> {
    output: &'a mut [f64],
    dim: usize,
    negatives: usize,
    noise: &'a WeightedIndex<f64>,
    update_output: bool,
}

impl Step<'_> {
    /// One positive word plus sampled negatives for document vector `doc`.
    fn run(&mut self, doc: &mut [f64], word: usize, lr: f64, grad: &mut [f64], rng: &mut ChaCha8Rng) {
        let dim = self.dim;
        grad.iter_mut().for_each(|g| *g = 0.0);
        for s in 0..=self.negatives {
            let (target, label) = if s == 0 {
                (word, 1.0)
            } else {
                let t = self.noise.sample(rng);
                if t == word {
                    continue;
                }
                (t, 0.0)
            };
            let row = &mut self.output[target * dim..(target + 1) * dim];
            let dot: f64 = row.iter().zip(doc.iter()).map(|(a, b)| a * b).sum();
            let g = lr * (label - sigmoid(dot));
            for k in 0..dim {
                grad[k] += g * row[k];
            }
            if self.update_output {
                for k in 0..dim {
                    row[k] += g * doc[k];
                }
            }
        }
        for k in 0..dim {
            doc[k] += grad[k];
        }
    }
}

fn decayed(cfg: &EmbedConfig, done: usize, total: usize) -> f64 {
    let frac = done as f64 / total.max(1) as f64;
    (cfg.lr - (cfg.lr - cfg.min_lr) * frac).max(cfg.min_lr)
}

/// Trains on tokenised documents and returns the embedder together with
/// the trained vectors of the (non-empty, encoded) training documents.
pub fn train_doc_embedder(
    docs: &[Vec<String>],
    prune: PruneConfig,
    cfg: &EmbedConfig,
) -> Result<(DocEmbedder, Vec<Vec<f64>>)> {
    cfg.validate()?;
    if docs.is_empty() {
        return Err(Error::invalid("embedding corpus is empty"));
    }
    let corpus = encode_corpus(docs, prune)?;
    let v = corpus.vocab.len();
    let mut counts = vec![0usize; v];
    for d in &corpus.docs {
        for &w in d {
            counts[w] += 1;
        }
    }
    let noise: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
    let sampler = WeightedIndex::new(&noise).map_err(|e| Error::invalid(format!("noise distribution: {e}")))?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut doc_vecs: Vec<Vec<f64>> = corpus.docs.iter().map(|_| init_vector(&mut rng, cfg.dim)).collect();
    let mut output = vec![0.0; v * cfg.dim];
    let total: usize = cfg.epochs * corpus.docs.iter().map(Vec::len).sum::<usize>();
    let mut done = 0;
    let mut grad = vec![0.0; cfg.dim];
    let mut step = Step {
        output: &mut output,
        dim: cfg.dim,
        negatives: cfg.negatives,
        noise: &sampler,
        update_output: true,
    };
    for _ in 0..cfg.epochs {
        for (doc, vec) in corpus.docs.iter().zip(doc_vecs.iter_mut()) {
            for &w in doc {
                let lr = decayed(cfg, done, total);
                step.run(vec, w, lr, &mut grad, &mut rng);
                done += 1;
            }
        }
    }
    let embedder = DocEmbedder {
        vocab: corpus.vocab,
        config: cfg.clone(),
        output,
        noise,
    };
    Ok((embedder, doc_vecs))
}

impl DocEmbedder {
    pub fn dim(&self) -> usize {
        self.config.dim
    }

    /// Fits a vector for an encoded document with output weights frozen.
    /// The initial vector and negative draws come from the configured seed,
    /// so equal documents get equal vectors.
    pub fn infer_encoded(&self, doc: &[usize]) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(1);
        let mut vec = init_vector(&mut rng, self.dim());
        let sampler = WeightedIndex::new(&self.noise).expect("validated at training time");
        let mut output = self.output.clone();
        let mut step = Step {
            output: &mut output,
            dim: self.dim(),
            negatives: self.config.negatives,
            noise: &sampler,
            update_output: false,
        };
        let total = self.config.infer_epochs * doc.len();
        let mut grad = vec![0.0; self.dim()];
        let mut done = 0;
        for _ in 0..self.config.infer_epochs {
            for &w in doc {
                let lr = decayed(&self.config, done, total);
                step.run(&mut vec, w, lr, &mut grad, &mut rng);
                done += 1;
            }
        }
        vec
    }

    /// Embeds a neighborhood from all its tweets concatenated. The flag is
    /// set when no token is in the vocabulary and a zero vector is returned.
    pub fn embed_neighborhood(&self, tweets: &[Vec<String>]) -> (Vec<f64>, bool) {
        let doc: Vec<usize> = tweets.iter().flat_map(|t| encode_doc(&self.vocab, t)).collect();
        if doc.is_empty() {
            return (vec![0.0; self.dim()], true);
        }
        (self.infer_encoded(&doc), false)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn planted_corpus() -> Vec<Vec<String>> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut docs = Vec::new();
        for g in 0..4 {
            for _ in 0..10 {
                let doc: Vec<String> = (0..30).map(|_| format!("g{g}w{}", rng.random_range(0..8))).collect();
                docs.push(doc);
            }
        }
        docs
    }

    fn small_cfg() -> EmbedConfig {
        EmbedConfig {
            dim: 16,
            epochs: 10,
            ..EmbedConfig::default()
        }
    }

    #[test]
    fn requested_dimension() {
        let (emb, vecs) = train_doc_embedder(&planted_corpus(), PruneConfig::keep_all(), &EmbedConfig::default()).unwrap();
        assert!(vecs.iter().all(|v| v.len() == 50));
        assert_eq!(emb.embed_neighborhood(&planted_corpus()[..2]).0.len(), 50);
    }

    #[test]
    fn seeded_training_repeats() {
        let a = train_doc_embedder(&planted_corpus(), PruneConfig::keep_all(), &small_cfg()).unwrap();
        let b = train_doc_embedder(&planted_corpus(), PruneConfig::keep_all(), &small_cfg()).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn empty_neighborhood_is_flagged_zero() {
        let (emb, _) = train_doc_embedder(&planted_corpus(), PruneConfig::keep_all(), &small_cfg()).unwrap();
        let (v, flag) = emb.embed_neighborhood(&[]);
        assert!(flag && v.iter().all(|x| *x == 0.0));
        let (v, flag) = emb.embed_neighborhood(&[vec!["unknown".into()]]);
        assert!(flag && v.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn duplicates_are_nearest_neighbors() {
        let docs = planted_corpus();
        let (emb, _) = train_doc_embedder(&docs, PruneConfig::keep_all(), &small_cfg()).unwrap();
        // Neighborhood 0 and 1 hold identical tweets; the others differ.
        let hoods: Vec<Vec<Vec<String>>> = vec![
            vec![docs[0].clone(), docs[15].clone()],
            vec![docs[0].clone(), docs[15].clone()],
            vec![docs[25].clone()],
            vec![docs[35].clone()],
            vec![docs[5].clone()],
        ];
        let vecs: Vec<Vec<f64>> = hoods.iter().map(|h| emb.embed_neighborhood(h).0).collect();
        assert!(vecs.iter().flatten().all(|x| x.is_finite()));
        let dup = cosine(&vecs[0], &vecs[1]);
        let mut others = Vec::new();
        for i in 0..vecs.len() {
            for j in i + 1..vecs.len() {
                if (i, j) != (0, 1) {
                    others.push(cosine(&vecs[i], &vecs[j]));
                }
            }
        }
        let mean = others.iter().sum::<f64>() / others.len() as f64;
        assert!(dup > mean);
        assert!(others.iter().take(3).all(|&c| c < dup));
    }

    #[test]
    fn same_group_documents_are_closer() {
        let docs = planted_corpus();
        let (emb, _) = train_doc_embedder(&docs, PruneConfig::keep_all(), &small_cfg()).unwrap();
        let v: Vec<Vec<f64>> = [0, 1, 20, 21].iter().map(|&i| emb.embed_neighborhood(&[docs[i].clone()]).0).collect();
        assert!(cosine(&v[0], &v[1]) > cosine(&v[0], &v[2]));
        assert!(cosine(&v[2], &v[3]) > cosine(&v[1], &v[3]));
    }
}
