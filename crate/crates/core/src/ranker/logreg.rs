use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{Standardizer, N_CLASSES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogRegConfig {
    /// Inverse regularisation strength: the objective is
    /// `Σ cross-entropy + ‖W‖₁ / C`.
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            c: 0.1,
            tol: 1e-4,
            max_iter: 1000,
        }
    }
}

/// Multinomial logistic regression with an L1 penalty on the weights
/// (intercepts unpenalised), fitted by accelerated proximal gradient on
/// standardised inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegression {
    pub scaler: Standardizer,
    /// `d × 3`, row-major.
    weights: Vec<f64>,
    intercept: [f64; N_CLASSES],
    pub iterations: usize,
}

fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Largest eigenvalue of `[X 1]ᵀ[X 1] / n` by power iteration.
fn gram_spectral_bound(x: &Array2<f64>) -> f64 {
    let n = x.nrows() as f64;
    let d = x.ncols();
    let mut v = Array1::from_elem(d + 1, 1.0 / ((d + 1) as f64).sqrt());
    let mut lambda = 1.0;
    for _ in 0..100 {
        let xv = x.dot(&v.slice(ndarray::s![..d])) + v[d];
        let mut w = Array1::zeros(d + 1);
        w.slice_mut(ndarray::s![..d]).assign(&x.t().dot(&xv));
        w[d] = xv.sum();
        w /= n;
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 1.0;
        }
        let next = norm;
        v = w / norm;
        if (next - lambda).abs() <= 1e-9 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda
}

impl LogisticRegression {
    pub fn fit(x: &Array2<f64>, y: &[usize], cfg: &LogRegConfig) -> Result<Self> {
        if !(cfg.c > 0.0) {
            return Err(Error::Config("logreg C must be positive".into()));
        }
        let scaler = Standardizer::fit(x);
        let xs = scaler.transform(x);
        let (n, d) = xs.dim();
        let nf = n as f64;
        let mut onehot = Array2::<f64>::zeros((n, N_CLASSES));
        for (r, &c) in y.iter().enumerate() {
            onehot[[r, c]] = 1.0;
        }
        let lambda = 1.0 / (cfg.c * nf);
        // Softmax cross-entropy has Hessian bounded by ½ XᵀX / n.
        let lipschitz = 0.5 * gram_spectral_bound(&xs) * 1.01;
        let step = 1.0 / lipschitz;

        let mut w = Array2::<f64>::zeros((d, N_CLASSES));
        let mut b = Array1::<f64>::zeros(N_CLASSES);
        let (mut yw, mut yb) = (w.clone(), b.clone());
        let mut t = 1.0f64;
        let mut iterations = 0;
        for it in 0..cfg.max_iter {
            iterations = it + 1;
            let mut p = xs.dot(&yw) + &yb;
            softmax_rows(&mut p);
            p -= &onehot;
            let gw = xs.t().dot(&p) / nf;
            let gb = p.sum_axis(Axis(0)) / nf;
            let w_next = (&yw - &(gw * step)).mapv(|v| soft_threshold(v, step * lambda));
            let b_next = &yb - &(gb * step);

            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let mom = (t - 1.0) / t_next;
            let dw = &w_next - &w;
            let db = &b_next - &b;
            let change = dw.iter().chain(db.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
            let scale = w_next.iter().chain(b_next.iter()).fold(1.0f64, |m, v| m.max(v.abs()));
            yw = &w_next + &(dw * mom);
            yb = &b_next + &(db * mom);
            w = w_next;
            b = b_next;
            t = t_next;
            if change <= cfg.tol * scale {
                break;
            }
        }
        if iterations == cfg.max_iter {
            log::debug!("logistic regression stopped at the iteration cap ({})", cfg.max_iter);
        }
        Ok(LogisticRegression {
            scaler,
            weights: w.iter().copied().collect(),
            intercept: [b[0], b[1], b[2]],
            iterations,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.scaler.mean.len()
    }

    pub fn nonzero_weights(&self) -> usize {
        self.weights.iter().filter(|w| **w != 0.0).count()
    }

    pub fn predict_proba(&self, x: &[f64]) -> [f64; N_CLASSES] {
        let xs = self.scaler.transform_row(x);
        let mut z = self.intercept;
        for (r, v) in xs.iter().enumerate() {
            for (c, zc) in z.iter_mut().enumerate() {
                *zc += v * self.weights[r * N_CLASSES + c];
            }
        }
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e = z.map(|v| (v - m).exp());
        let s: f64 = e.iter().sum();
        e.map(|v| v / s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ranker::argmax;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Three classes split by two parallel lines in the plane.
    fn separable(n: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        while ys.len() < n {
            let (a, b): (f64, f64) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let m = a - b;
            // keep a margin around both boundaries
            if (m.abs() - 0.5).abs() < 0.1 {
                continue;
            }
            xs.extend([a, b]);
            ys.push(if m > 0.5 { 2 } else if m < -0.5 { 0 } else { 1 });
        }
        (Array2::from_shape_vec((n, 2), xs).unwrap(), ys)
    }

    #[test]
    fn separable_training_accuracy() {
        let (x, y) = separable(1000, 1);
        let m = LogisticRegression::fit(&x, &y, &LogRegConfig::default()).unwrap();
        let correct = x
            .rows()
            .into_iter()
            .zip(&y)
            .filter(|(r, &c)| argmax(&m.predict_proba(&r.to_vec())) == c)
            .count();
        assert!(correct as f64 / y.len() as f64 >= 0.95, "{correct}/1000 after {} iterations", m.iterations);
    }

    #[test]
    fn strong_penalty_zeroes_weights() {
        let (x, y) = separable(100, 2);
        let cfg = LogRegConfig {
            c: 1e-5,
            ..LogRegConfig::default()
        };
        let m = LogisticRegression::fit(&x, &y, &cfg).unwrap();
        assert_eq!(m.nonzero_weights(), 0);
        let p = m.predict_proba(&[0.0, 0.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_fit() {
        let (x, y) = separable(80, 3);
        let a = LogisticRegression::fit(&x, &y, &LogRegConfig::default()).unwrap();
        let b = LogisticRegression::fit(&x, &y, &LogRegConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
