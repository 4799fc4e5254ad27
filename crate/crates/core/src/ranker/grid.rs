use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{train_matrix, ClassifierKind, RankerConfig, N_CLASSES};
use crate::error::{Error, Result};

/// Hyperparameter lattice. Empty axes keep the base value; the expanded
/// grid is the cartesian product in field order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub logreg_c: Vec<f64>,
    pub forest_min_samples_leaf: Vec<usize>,
    pub forest_n_trees: Vec<usize>,
    pub mlp_lr: Vec<f64>,
    pub mlp_l2: Vec<f64>,
}

fn axis<T: Clone>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

impl GridSpec {
    pub fn expand(&self, kind: ClassifierKind, base: &RankerConfig) -> Vec<RankerConfig> {
        let mut out = Vec::new();
        match kind {
            ClassifierKind::Logreg => {
                for c in axis(&self.logreg_c, base.logreg.c) {
                    let mut cfg = base.clone();
                    cfg.logreg.c = c;
                    out.push(cfg);
                }
            }
            ClassifierKind::Forest => {
                for leaf in axis(&self.forest_min_samples_leaf, base.forest.min_samples_leaf) {
                    for trees in axis(&self.forest_n_trees, base.forest.n_trees) {
                        let mut cfg = base.clone();
                        cfg.forest.min_samples_leaf = leaf;
                        cfg.forest.n_trees = trees;
                        out.push(cfg);
                    }
                }
            }
            ClassifierKind::Mlp => {
                for lr in axis(&self.mlp_lr, base.mlp.lr) {
                    for l2 in axis(&self.mlp_l2, base.mlp.l2) {
                        let mut cfg = base.clone();
                        cfg.mlp.lr = lr;
                        cfg.mlp.l2 = l2;
                        out.push(cfg);
                    }
                }
            }
        }
        out
    }
}

/// Unweighted mean of per-class F1 over the classes that occur in either
/// the truth or the predictions.
pub fn macro_f1(truth: &[usize], pred: &[usize]) -> f64 {
    let mut tp = [0usize; N_CLASSES];
    let mut fp = [0usize; N_CLASSES];
    let mut fneg = [0usize; N_CLASSES];
    for (&t, &p) in truth.iter().zip(pred) {
        if t == p {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fneg[t] += 1;
        }
    }
    let scores: Vec<f64> = (0..N_CLASSES)
        .filter(|&c| tp[c] + fp[c] + fneg[c] > 0)
        .map(|c| 2.0 * tp[c] as f64 / (2 * tp[c] + fp[c] + fneg[c]) as f64)
        .collect();
    if scores.is_empty() {
        0.0
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    }
}

/// Fold index per instance; each class is shuffled and dealt round-robin.
pub fn stratified_folds(y: &[usize], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::invalid("cross-validation needs at least 2 folds"));
    }
    if y.len() < folds {
        return Err(Error::invalid(format!("{} instances cannot fill {folds} folds", y.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; y.len()];
    let mut next = 0;
    for c in 0..N_CLASSES {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
        members.shuffle(&mut rng);
        for i in members {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    Ok(assignment)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best_index: usize,
    pub best: RankerConfig,
    pub mean_scores: Vec<f64>,
}

/// Stratified k-fold macro-F1 for every grid point; the highest mean wins
/// and ties go to the earlier point.
pub fn grid_search(
    x: &Array2<f64>,
    y: &[usize],
    kind: ClassifierKind,
    grid: &[RankerConfig],
    folds: usize,
    seed: u64,
) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(Error::invalid("empty hyperparameter grid"));
    }
    let assignment = stratified_folds(y, folds, seed)?;
    let mut means = Vec::with_capacity(grid.len());
    for cfg in grid {
        let mut total = 0.0;
        for f in 0..folds {
            let train: Vec<usize> = (0..y.len()).filter(|&i| assignment[i] != f).collect();
            let test: Vec<usize> = (0..y.len()).filter(|&i| assignment[i] == f).collect();
            let ytr: Vec<usize> = train.iter().map(|&i| y[i]).collect();
            let model = train_matrix(&x.select(Axis(0), &train), &ytr, kind, cfg, seed)?;
            let pred = model.predict_matrix(&x.select(Axis(0), &test))?;
            let yte: Vec<usize> = test.iter().map(|&i| y[i]).collect();
            total += macro_f1(&yte, &pred);
        }
        means.push(total / folds as f64);
    }
    let mut best = 0;
    for (i, m) in means.iter().enumerate() {
        if *m > means[best] {
            best = i;
        }
    }
    Ok(GridResult {
        best_index: best,
        best: grid[best].clone(),
        mean_scores: means,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn f1_ceiling_and_half() {
        let y = vec![0, 1, 2, 2, 1, 0];
        assert_eq!(macro_f1(&y, &y), 1.0);
        // each class: 2 true, predicted right once and wrong once, P = R = 0.5
        let truth = vec![0, 0, 1, 1, 2, 2];
        let pred = vec![0, 1, 1, 2, 2, 0];
        assert!((macro_f1(&truth, &pred) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn folds_are_stratified_and_seeded() {
        let y: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let a = stratified_folds(&y, 5, 1).unwrap();
        assert_eq!(a, stratified_folds(&y, 5, 1).unwrap());
        for f in 0..5 {
            for c in 0..3 {
                assert_eq!((0..30).filter(|&i| a[i] == f && y[i] == c).count(), 2);
            }
        }
        assert!(stratified_folds(&y, 1, 0).is_err());
        assert!(stratified_folds(&y[..3], 5, 0).is_err());
    }

    fn toy() -> (Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Array2::from_shape_simple_fn((60, 2), || rng.random_range(-1.0..1.0));
        let y = x.rows().into_iter().map(|r| if r[0] > 0.2 { 2 } else if r[0] < -0.2 { 0 } else { 1 }).collect();
        (x, y)
    }

    #[test]
    fn singleton_grid_and_empty_grid() {
        let (x, y) = toy();
        let base = RankerConfig::default();
        let grid = GridSpec::default().expand(ClassifierKind::Logreg, &base);
        assert_eq!(grid.len(), 1);
        let r = grid_search(&x, &y, ClassifierKind::Logreg, &grid, 5, 0).unwrap();
        assert_eq!(r.best_index, 0);
        assert_eq!(r.best, base);
        assert!(grid_search(&x, &y, ClassifierKind::Logreg, &[], 5, 0).is_err());
    }

    #[test]
    fn ties_go_to_first_point() {
        let (x, y) = toy();
        let base = RankerConfig::default();
        // identical configurations score identically
        let grid = vec![base.clone(), base.clone()];
        let r = grid_search(&x, &y, ClassifierKind::Logreg, &grid, 3, 0).unwrap();
        assert_eq!(r.mean_scores[0], r.mean_scores[1]);
        assert_eq!(r.best_index, 0);
    }

    #[test]
    fn lattice_expansion() {
        let spec = GridSpec {
            forest_min_samples_leaf: vec![1, 5],
            forest_n_trees: vec![10, 20, 30],
            ..GridSpec::default()
        };
        let g = spec.expand(ClassifierKind::Forest, &RankerConfig::default());
        assert_eq!(g.len(), 6);
        assert_eq!((g[1].forest.min_samples_leaf, g[1].forest.n_trees), (1, 20));
    }
}
