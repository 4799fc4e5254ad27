//! Latent Dirichlet allocation by collapsed Gibbs sampling, fold-in
//! inference against a fixed model, held-out perplexity and topic-count
//! selection by the rate of perplexity change.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::vocab::{encode_corpus, encode_doc, PruneConfig, Vocab};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    pub burn_in: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            burn_in: 100,
            samples: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdaConfig {
    pub topics: usize,
    /// Document-topic prior; `50 / topics` when unset.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
    pub inference: InferenceConfig,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig {
            topics: 70,
            alpha: None,
            beta: 0.01,
            iterations: 1000,
            seed: 0,
            inference: InferenceConfig::default(),
        }
    }
}

impl LdaConfig {
    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.topics as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.topics == 0 {
            return Err(Error::Config("topic count must be at least 1".into()));
        }
        if !(self.alpha() > 0.0) || !(self.beta > 0.0) {
            return Err(Error::Config("LDA priors must be positive".into()));
        }
        if self.inference.samples == 0 {
            return Err(Error::Config("inference needs at least one sample".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub vocab: Vocab,
    /// Row-major `k × |vocab|`; each row sums to one.
    topic_word: Vec<f64>,
    pub inference: InferenceConfig,
}

/// Trains on tokenised documents after vocabulary pruning.
pub fn train_lda(docs: &[Vec<String>], prune: PruneConfig, cfg: &LdaConfig) -> Result<TopicModel> {
    cfg.validate()?;
    let corpus = encode_corpus(docs, prune)?;
    Ok(train_encoded(corpus.vocab, &corpus.docs, cfg))
}

fn sample_index(rng: &mut ChaCha8Rng, cumulative: &[f64]) -> usize {
    let total = *cumulative.last().expect("non-empty");
    let u = rng.random::<f64>() * total;
    cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1)
}

pub(crate) fn train_encoded(vocab: Vocab, docs: &[Vec<usize>], cfg: &LdaConfig) -> TopicModel {
    let k = cfg.topics;
    let v = vocab.len();
    let alpha = cfg.alpha();
    let beta = cfg.beta;
    let v_beta = v as f64 * beta;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut doc_topic = vec![0u32; docs.len() * k];
    let mut topic_word = vec![0u32; k * v];
    let mut topic_total = vec![0u32; k];
    let mut assignments: Vec<Vec<u32>> = Vec::with_capacity(docs.len());
    for (d, doc) in docs.iter().enumerate() {
        let z: Vec<u32> = doc
            .iter()
            .map(|&w| {
                let t = rng.random_range(0..k);
                doc_topic[d * k + t] += 1;
                topic_word[t * v + w] += 1;
                topic_total[t] += 1;
                t as u32
            })
            .collect();
        assignments.push(z);
    }

    let mut cumulative = vec![0.0; k];
    for _ in 0..cfg.iterations {
        for (d, doc) in docs.iter().enumerate() {
            let dt = &mut doc_topic[d * k..(d + 1) * k];
            for (pos, &w) in doc.iter().enumerate() {
                let old = assignments[d][pos] as usize;
                dt[old] -= 1;
                topic_word[old * v + w] -= 1;
                topic_total[old] -= 1;
                let mut acc = 0.0;
                for t in 0..k {
                    acc += (f64::from(dt[t]) + alpha) * (f64::from(topic_word[t * v + w]) + beta)
                        / (f64::from(topic_total[t]) + v_beta);
                    cumulative[t] = acc;
                }
                let new = sample_index(&mut rng, &cumulative);
                dt[new] += 1;
                topic_word[new * v + w] += 1;
                topic_total[new] += 1;
                assignments[d][pos] = new as u32;
            }
        }
    }

    let mut phi = vec![0.0; k * v];
    for t in 0..k {
        let denom = f64::from(topic_total[t]) + v_beta;
        for w in 0..v {
            phi[t * v + w] = (f64::from(topic_word[t * v + w]) + beta) / denom;
        }
    }
    TopicModel {
        k,
        alpha,
        beta,
        vocab,
        topic_word: phi,
        inference: cfg.inference,
    }
}

impl TopicModel {
    /// Builds a model from explicit topic-word rows (normalised here).
    pub fn from_topic_word(vocab: Vocab, rows: Vec<Vec<f64>>, alpha: f64, beta: f64) -> Result<Self> {
        let k = rows.len();
        if k == 0 {
            return Err(Error::invalid("a topic model needs at least one topic"));
        }
        let mut flat = Vec::with_capacity(k * vocab.len());
        for row in rows {
            if row.len() != vocab.len() {
                return Err(Error::DimensionMismatch {
                    expected: vocab.len(),
                    got: row.len(),
                });
            }
            let s: f64 = row.iter().sum();
            if !(s > 0.0) || row.iter().any(|x| *x < 0.0 || !x.is_finite()) {
                return Err(Error::invalid("topic rows must be non-negative with positive mass"));
            }
            flat.extend(row.iter().map(|x| x / s));
        }
        Ok(TopicModel {
            k,
            alpha,
            beta,
            vocab,
            topic_word: flat,
            inference: InferenceConfig::default(),
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn topic(&self, t: usize) -> &[f64] {
        let v = self.vocab_size();
        &self.topic_word[t * v..(t + 1) * v]
    }

    #[inline]
    fn phi(&self, t: usize, w: usize) -> f64 {
        self.topic_word[t * self.vocab_size() + w]
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        encode_doc(&self.vocab, tokens)
    }

    /// Fold-in Gibbs estimate of a document's topic mixture with the
    /// topic-word distributions held fixed: `burn_in` sweeps, then the
    /// average of `samples` per-sweep estimates `(n_k + α) / (N + Kα)`.
    pub fn infer(&self, doc: &[usize], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let k = self.k;
        if doc.is_empty() {
            return vec![1.0 / k as f64; k];
        }
        let mut counts = vec![0u32; k];
        let mut z: Vec<usize> = doc
            .iter()
            .map(|_| {
                let t = rng.random_range(0..k);
                counts[t] += 1;
                t
            })
            .collect();
        let denom = doc.len() as f64 + k as f64 * self.alpha;
        let mut theta = vec![0.0; k];
        let mut cumulative = vec![0.0; k];
        let sweeps = self.inference.burn_in + self.inference.samples;
        for sweep in 0..sweeps {
            for (pos, &w) in doc.iter().enumerate() {
                counts[z[pos]] -= 1;
                let mut acc = 0.0;
                for t in 0..k {
                    acc += (f64::from(counts[t]) + self.alpha) * self.phi(t, w);
                    cumulative[t] = acc;
                }
                let new = sample_index(rng, &cumulative);
                counts[new] += 1;
                z[pos] = new;
            }
            if sweep >= self.inference.burn_in {
                for t in 0..k {
                    theta[t] += (f64::from(counts[t]) + self.alpha) / denom;
                }
            }
        }
        let s = self.inference.samples as f64;
        theta.iter_mut().for_each(|x| *x /= s);
        theta
    }

    fn rng_for(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.inference.seed);
        rng.set_stream(stream);
        rng
    }

    /// Topic mixture of a neighborhood (all its tweets as one document).
    /// The flag is set when no token was in the vocabulary and the uniform
    /// fallback was returned.
    pub fn topic_distribution(&self, tweets: &[Vec<String>]) -> (Vec<f64>, bool) {
        let doc: Vec<usize> = tweets.iter().flat_map(|t| self.encode(t)).collect();
        if doc.is_empty() {
            return (vec![1.0 / self.k as f64; self.k], true);
        }
        (self.infer(&doc, &mut self.rng_for(0)), false)
    }

    /// `exp(-Σ log p(w) / Σ N)` over held-out documents, with each
    /// document's mixture inferred by fold-in Gibbs. Documents without any
    /// in-vocabulary token are skipped.
    pub fn perplexity(&self, heldout: &[Vec<String>]) -> Result<f64> {
        let mut log_lik = 0.0;
        let mut n_words = 0usize;
        for (i, tokens) in heldout.iter().enumerate() {
            let doc = self.encode(tokens);
            if doc.is_empty() {
                continue;
            }
            let theta = self.infer(&doc, &mut self.rng_for(i as u64));
            log_lik += self.log_likelihood(&doc, &theta);
            n_words += doc.len();
        }
        if n_words == 0 {
            return Err(Error::invalid("no held-out document has in-vocabulary words"));
        }
        Ok((-log_lik / n_words as f64).exp())
    }

    /// `Σ_w log Σ_k θ_k φ_kw` for an encoded document.
    pub fn log_likelihood(&self, doc: &[usize], theta: &[f64]) -> f64 {
        doc.iter()
            .map(|&w| (0..self.k).map(|t| theta[t] * self.phi(t, w)).sum::<f64>().ln())
            .sum()
    }
}

/// Perplexity as a function of topic count, with the rate of change
/// `RPC(i) = |(P_i - P_{i-1}) / (t_i - t_{i-1})|` for `i >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpcCurve {
    pub topic_counts: Vec<usize>,
    pub perplexities: Vec<f64>,
    /// `rpc[i - 1]` belongs to `topic_counts[i]`.
    pub rpc: Vec<f64>,
}

impl RpcCurve {
    pub fn new(topic_counts: Vec<usize>, perplexities: Vec<f64>) -> Result<Self> {
        if topic_counts.len() < 2 {
            return Err(Error::invalid("RPC needs at least two topic counts"));
        }
        if topic_counts.len() != perplexities.len() {
            return Err(Error::DimensionMismatch {
                expected: topic_counts.len(),
                got: perplexities.len(),
            });
        }
        if topic_counts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("topic counts must be strictly increasing"));
        }
        let rpc = (1..topic_counts.len())
            .map(|i| {
                ((perplexities[i] - perplexities[i - 1]) / (topic_counts[i] - topic_counts[i - 1]) as f64).abs()
            })
            .collect();
        Ok(RpcCurve {
            topic_counts,
            perplexities,
            rpc,
        })
    }

    /// Topic count with the largest RPC; the smaller count wins ties.
    pub fn best(&self) -> usize {
        let mut best = 0;
        for (i, &r) in self.rpc.iter().enumerate() {
            if r > self.rpc[best] {
                best = i;
            }
        }
        self.topic_counts[best + 1]
    }
}

/// Evaluates `perplexity_of` at every candidate count and picks the count
/// that maximises the rate of perplexity change.
pub fn rpc_select(
    counts: &[usize],
    mut perplexity_of: impl FnMut(usize) -> Result<f64>,
) -> Result<(usize, RpcCurve)> {
    if counts.len() < 2 {
        return Err(Error::invalid("RPC needs at least two topic counts"));
    }
    let perplexities = counts.iter().map(|&k| perplexity_of(k)).collect::<Result<Vec<_>>>()?;
    let curve = RpcCurve::new(counts.to_vec(), perplexities)?;
    Ok((curve.best(), curve))
}
