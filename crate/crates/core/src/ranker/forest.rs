//! Random forest of gini CART trees. Candidate thresholds are the midpoints
//! between consecutive distinct training values of a feature; features with
//! more than `max_bins` distinct values fall back to quantile cut points.
//! Split search then works on per-node class histograms over those bins.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::N_CLASSES;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub min_samples_leaf: usize,
    /// Features tried per split; `⌊√d⌋` when unset.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub max_bins: usize,
    /// Grow trees on the rayon pool. Results are identical either way.
    pub parallel: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 200,
            min_samples_leaf: 5,
            max_features: None,
            bootstrap: true,
            max_bins: 256,
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf([f64; N_CLASSES]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn leaf(&self, x: &[f64]) -> &[f64; N_CLASSES] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf(p) => return p,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }
}

/// Cut points per feature; `bin(x)` counts the cut points below `x`, so
/// `bin(x) <= b` exactly when `x <= edges[b]`.
struct Binned {
    edges: Vec<Vec<f64>>,
    /// Column-major bin indices.
    bins: Vec<Vec<u8>>,
}

impl Binned {
    fn new(x: &Array2<f64>, max_bins: usize) -> Self {
        let mut edges = Vec::with_capacity(x.ncols());
        let mut bins = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let mut sorted: Vec<f64> = col.to_vec();
            sorted.sort_by(f64::total_cmp);
            let mut distinct = sorted.clone();
            distinct.dedup();
            let e: Vec<f64> = if distinct.len() <= max_bins {
                distinct.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0).collect()
            } else {
                let n = sorted.len();
                let mut cuts: Vec<f64> = (1..max_bins).map(|b| sorted[b * n / max_bins]).collect();
                cuts.dedup();
                // the maximum cannot serve as a cut point
                if cuts.last() == distinct.last() {
                    cuts.pop();
                }
                cuts
            };
            bins.push(col.iter().map(|v| e.partition_point(|c| c < v) as u8).collect());
            edges.push(e);
        }
        Binned { edges, bins }
    }
}

struct Grower<'a> {
    data: &'a Binned,
    y: &'a [usize],
    min_leaf: usize,
    mtry: usize,
}

fn proxy(counts: &[u32; N_CLASSES], n: u32) -> f64 {
    // Σ c² / n; larger means purer. Weighted gini = n − proxy.
    if n == 0 {
        return 0.0;
    }
    counts.iter().map(|&c| f64::from(c) * f64::from(c)).sum::<f64>() / f64::from(n)
}

impl Grower<'_> {
    fn best_split(&self, idx: &[usize], rng: &mut ChaCha8Rng, hist: &mut [[u32; N_CLASSES]]) -> Option<(usize, usize)> {
        let mut order: Vec<usize> = (0..self.data.bins.len()).collect();
        order.shuffle(rng);
        let n = idx.len() as u32;
        let mut best: Option<(f64, usize, usize)> = None;
        let mut informative = 0;
        for f in order {
            if informative >= self.mtry {
                break;
            }
            let nb = self.data.edges[f].len() + 1;
            if nb < 2 {
                continue;
            }
            let col = &self.data.bins[f];
            hist[..nb].iter_mut().for_each(|h| *h = [0; N_CLASSES]);
            let (mut lo, mut hi) = (usize::MAX, 0);
            for &i in idx {
                let b = col[i] as usize;
                hist[b][self.y[i]] += 1;
                lo = lo.min(b);
                hi = hi.max(b);
            }
            if lo == hi {
                continue;
            }
            informative += 1;
            let mut total = [0u32; N_CLASSES];
            for h in &hist[lo..=hi] {
                for c in 0..N_CLASSES {
                    total[c] += h[c];
                }
            }
            let mut left = [0u32; N_CLASSES];
            let mut nl = 0u32;
            for (b, h) in hist.iter().enumerate().take(hi).skip(lo) {
                for c in 0..N_CLASSES {
                    left[c] += h[c];
                }
                nl += h.iter().sum::<u32>();
                let nr = n - nl;
                if (nl as usize) < self.min_leaf || (nr as usize) < self.min_leaf {
                    continue;
                }
                let right = [total[0] - left[0], total[1] - left[1], total[2] - left[2]];
                let score = proxy(&left, nl) + proxy(&right, nr);
                if best.is_none_or(|(s, _, _)| score > s + 1e-12) {
                    best = Some((score, f, b));
                }
            }
        }
        best.map(|(_, f, b)| (f, b))
    }

    fn grow(&self, mut idx: Vec<usize>, rng: &mut ChaCha8Rng) -> Tree {
        let mut nodes = vec![Node::Leaf([0.0; N_CLASSES])];
        let mut stack = vec![(0usize, 0usize, idx.len())];
        let mut hist = vec![[0u32; N_CLASSES]; 256];
        while let Some((node, start, end)) = stack.pop() {
            let slice = &mut idx[start..end];
            let mut counts = [0u32; N_CLASSES];
            for &i in slice.iter() {
                counts[self.y[i]] += 1;
            }
            let n = slice.len();
            let pure = counts.iter().filter(|c| **c > 0).count() <= 1;
            let split = if pure || n < 2 * self.min_leaf {
                None
            } else {
                self.best_split(slice, rng, &mut hist)
            };
            match split {
                None => {
                    let nf = n as f64;
                    nodes[node] = Node::Leaf(counts.map(|c| f64::from(c) / nf));
                }
                Some((f, b)) => {
                    let col = &self.data.bins[f];
                    let mut mid = 0;
                    for k in 0..n {
                        if col[slice[k]] as usize <= b {
                            slice.swap(k, mid);
                            mid += 1;
                        }
                    }
                    let left = nodes.len();
                    nodes.push(Node::Leaf([0.0; N_CLASSES]));
                    nodes.push(Node::Leaf([0.0; N_CLASSES]));
                    nodes[node] = Node::Split {
                        feature: f as u32,
                        threshold: self.data.edges[f][b],
                        left: left as u32,
                        right: left as u32 + 1,
                    };
                    stack.push((left + 1, start + mid, end));
                    stack.push((left, start, start + mid));
                }
            }
        }
        Tree { nodes }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    trees: Vec<Tree>,
    input_dim: usize,
}

impl RandomForest {
    /// Tree `t` draws its bootstrap sample and feature subsets from stream
    /// `t` of a generator seeded with `seed`.
    pub fn fit(x: &Array2<f64>, y: &[usize], cfg: &ForestConfig, seed: u64) -> Result<Self> {
        if cfg.n_trees == 0 || cfg.min_samples_leaf == 0 {
            return Err(Error::Config("forest needs at least one tree and min_samples_leaf >= 1".into()));
        }
        if !(2..=256).contains(&cfg.max_bins) {
            return Err(Error::Config("forest max_bins must be in 2..=256".into()));
        }
        let (n, d) = x.dim();
        let data = Binned::new(x, cfg.max_bins);
        let mtry = cfg
            .max_features
            .unwrap_or_else(|| ((d as f64).sqrt() as usize).max(1))
            .clamp(1, d.max(1));
        let grower = Grower {
            data: &data,
            y,
            min_leaf: cfg.min_samples_leaf,
            mtry,
        };
        let build = |t: usize| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let idx: Vec<usize> = if cfg.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grower.grow(idx, &mut rng)
        };
        let trees = if cfg.parallel {
            (0..cfg.n_trees).into_par_iter().map(build).collect()
        } else {
            (0..cfg.n_trees).map(build).collect()
        };
        Ok(RandomForest { trees, input_dim: d })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn predict_proba(&self, x: &[f64]) -> [f64; N_CLASSES] {
        let mut p = [0.0; N_CLASSES];
        for t in &self.trees {
            for (acc, v) in p.iter_mut().zip(t.leaf(x)) {
                *acc += v;
            }
        }
        let k = self.trees.len() as f64;
        p.map(|v| v / k)
    }
}
