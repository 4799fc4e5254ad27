//! Feed-forward network with rectified hidden layers and a softmax head,
//! trained on cross-entropy with Adam over shuffled minibatches.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Standardizer, N_CLASSES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    /// L2 penalty, applied as `l2 / (2·batch) · Σ‖W‖²` per minibatch.
    pub l2: f64,
    pub max_epochs: usize,
    /// Training stops once the epoch loss has failed to improve by `tol`
    /// for `patience` consecutive epochs.
    pub tol: f64,
    pub patience: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: vec![100, 100, 100],
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            l2: 1e-4,
            max_epochs: 200,
            tol: 1e-4,
            patience: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub scaler: Standardizer,
    pub layers: Vec<Layer>,
    pub l2: f64,
    pub epochs_run: usize,
}

/// Gradients with the same shapes as the layers.
pub struct Gradients {
    pub w: Vec<Array2<f64>>,
    pub b: Vec<Array1<f64>>,
}

fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
}

impl Mlp {
    /// Glorot-uniform initialisation with an identity input scaler.
    pub fn init(input_dim: usize, cfg: &MlpConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sizes = vec![input_dim];
        sizes.extend(&cfg.hidden);
        sizes.push(N_CLASSES);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Layer {
                    w: Array2::from_shape_simple_fn((w[0], w[1]), || rng.random_range(-bound..bound)),
                    b: Array1::from_shape_simple_fn(w[1], || rng.random_range(-bound..bound)),
                }
            })
            .collect();
        Mlp {
            scaler: Standardizer {
                mean: vec![0.0; input_dim],
                scale: vec![1.0; input_dim],
            },
            layers,
            l2: cfg.l2,
            epochs_run: 0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    /// Pre-activations of every layer for already-scaled inputs.
    fn forward(&self, x: &Array2<f64>) -> Vec<Array2<f64>> {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = h.dot(&layer.w) + &layer.b;
            h = if l + 1 < self.layers.len() { z.mapv(|v| v.max(0.0)) } else { z.clone() };
            pre.push(z);
        }
        pre
    }

    /// Which hidden units are active, flattened; used to detect when a
    /// perturbation crosses a rectifier kink.
    pub fn activation_pattern(&self, x: &Array2<f64>) -> Vec<bool> {
        let pre = self.forward(x);
        pre[..pre.len() - 1].iter().flat_map(|z| z.iter().map(|v| *v > 0.0)).collect()
    }

    /// Mean cross-entropy plus the L2 term, with its gradient, for inputs
    /// already on the network's scale.
    pub fn loss_and_gradient(&self, x: &Array2<f64>, y: &[usize]) -> (f64, Gradients) {
        let n = x.nrows() as f64;
        let pre = self.forward(x);
        let mut p = pre.last().expect("output layer").clone();
        softmax_rows(&mut p);
        let mut loss = 0.0;
        for (r, &c) in y.iter().enumerate() {
            loss -= p[[r, c]].max(1e-300).ln();
            p[[r, c]] -= 1.0;
        }
        loss /= n;
        let sq: f64 = self.layers.iter().map(|l| l.w.iter().map(|v| v * v).sum::<f64>()).sum();
        loss += self.l2 / (2.0 * n) * sq;

        let mut delta = p / n;
        let mut gw = vec![Array2::zeros((0, 0)); self.layers.len()];
        let mut gb = vec![Array1::zeros(0); self.layers.len()];
        for l in (0..self.layers.len()).rev() {
            let input = if l == 0 { x.clone() } else { pre[l - 1].mapv(|v| v.max(0.0)) };
            gw[l] = input.t().dot(&delta) + &(&self.layers[l].w * (self.l2 / n));
            gb[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut back = delta.dot(&self.layers[l].w.t());
                back.zip_mut_with(&pre[l - 1], |d, z| {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
        }
        (loss, Gradients { w: gw, b: gb })
    }

    pub fn fit(x: &Array2<f64>, y: &[usize], cfg: &MlpConfig, seed: u64) -> Result<Self> {
        if cfg.batch_size == 0 || cfg.hidden.iter().any(|&h| h == 0) || !(cfg.lr > 0.0) {
            return Err(Error::Config("mlp needs positive batch size, layer widths and learning rate".into()));
        }
        let scaler = Standardizer::fit(x);
        let xs = scaler.transform(x);
        let mut net = Mlp::init(x.ncols(), cfg, seed);
        net.scaler = scaler;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);

        let mut m_w: Vec<Array2<f64>> = net.layers.iter().map(|l| Array2::zeros(l.w.dim())).collect();
        let mut v_w = m_w.clone();
        let mut m_b: Vec<Array1<f64>> = net.layers.iter().map(|l| Array1::zeros(l.b.len())).collect();
        let mut v_b = m_b.clone();
        let mut step = 0i32;
        let mut order: Vec<usize> = (0..xs.nrows()).collect();
        let mut best = f64::INFINITY;
        let mut stale = 0;
        for epoch in 0..cfg.max_epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for batch in order.chunks(cfg.batch_size) {
                let xb = xs.select(Axis(0), batch);
                let yb: Vec<usize> = batch.iter().map(|&i| y[i]).collect();
                let (loss, g) = net.loss_and_gradient(&xb, &yb);
                epoch_loss += loss * batch.len() as f64;
                step += 1;
                let c1 = 1.0 - cfg.beta1.powi(step);
                let c2 = 1.0 - cfg.beta2.powi(step);
                let lr = cfg.lr * c2.sqrt() / c1;
                for (l, layer) in net.layers.iter_mut().enumerate() {
                    adam(&mut layer.w, &g.w[l], &mut m_w[l], &mut v_w[l], cfg, lr);
                    adam(&mut layer.b, &g.b[l], &mut m_b[l], &mut v_b[l], cfg, lr);
                }
            }
            epoch_loss /= xs.nrows() as f64;
            net.epochs_run = epoch + 1;
            if epoch_loss > best - cfg.tol {
                stale += 1;
            } else {
                stale = 0;
            }
            best = best.min(epoch_loss);
            if stale >= cfg.patience {
                break;
            }
        }
        Ok(net)
    }

    pub fn predict_proba(&self, x: &[f64]) -> [f64; N_CLASSES] {
        let xs = Array2::from_shape_vec((1, x.len()), self.scaler.transform_row(x)).expect("row");
        let mut z = self.forward(&xs).pop().expect("output layer");
        softmax_rows(&mut z);
        [z[[0, 0]], z[[0, 1]], z[[0, 2]]]
    }
}

fn adam<D: ndarray::Dimension>(
    param: &mut ndarray::Array<f64, D>,
    grad: &ndarray::Array<f64, D>,
    m: &mut ndarray::Array<f64, D>,
    v: &mut ndarray::Array<f64, D>,
    cfg: &MlpConfig,
    lr: f64,
) {
    ndarray::Zip::from(param).and(grad).and(m).and(v).for_each(|p, &g, m, v| {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        *p -= lr * *m / (v.sqrt() + cfg.epsilon);
    });
}
