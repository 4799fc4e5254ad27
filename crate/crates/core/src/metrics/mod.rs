//! Weak orderings and the τ_x rank correlation.
//!
//! A weak ordering over `n` objects is stored as an `n × n` score matrix
//! with `a[i][j] = +1` when `i` is ahead of or tied with `j`, `-1` when `i`
//! is behind `j`, and `0` on the diagonal. Ties are a pairwise relation and
//! need not be transitive.

mod wilcoxon;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use wilcoxon::{wilcoxon_signed_rank, WilcoxonResult};

/// The coefficient grid used for tie thresholds unless configured otherwise.
pub const DEFAULT_COEFFICIENTS: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    ids: Vec<String>,
    a: Vec<i8>,
}

impl ScoreMatrix {
    /// Builds a matrix from a pairwise relation. `ahead_or_tied(i, j)` is
    /// asked for every ordered pair `i != j`; when it is false for both
    /// directions the pair is recorded as tied so the matrix stays valid.
    pub fn from_relation(ids: Vec<String>, mut ahead_or_tied: impl FnMut(usize, usize) -> bool) -> Self {
        let n = ids.len();
        let mut a = vec![0i8; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let ij = ahead_or_tied(i, j);
                let ji = ahead_or_tied(j, i);
                let (x, y) = match (ij, ji) {
                    (true, false) => (1, -1),
                    (false, true) => (-1, 1),
                    _ => (1, 1),
                };
                a[i * n + j] = x;
                a[j * n + i] = y;
            }
        }
        ScoreMatrix { ids, a }
    }

    /// Strict total order given by `order` (first element ranked first).
    /// `ids` fixes the matrix indexing; `order` must be a permutation of it.
    pub fn from_permutation(ids: Vec<String>, order: &[usize]) -> Result<Self> {
        let n = ids.len();
        if order.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: order.len(),
            });
        }
        let mut position = vec![usize::MAX; n];
        for (pos, &obj) in order.iter().enumerate() {
            if obj >= n || position[obj] != usize::MAX {
                return Err(Error::invalid("order is not a permutation"));
            }
            position[obj] = pos;
        }
        Ok(Self::from_relation(ids, |i, j| position[i] < position[j]))
    }

    /// Raw constructor; checks every matrix invariant.
    pub fn from_raw(ids: Vec<String>, a: Vec<i8>) -> Result<Self> {
        let m = ScoreMatrix { ids, a };
        m.validate()?;
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> i8 {
        self.a[i * self.n() + j]
    }

    pub fn entries(&self) -> &[i8] {
        &self.a
    }

    pub fn is_tied(&self, i: usize, j: usize) -> bool {
        i != j && self.get(i, j) == 1 && self.get(j, i) == 1
    }

    pub fn is_strict(&self) -> bool {
        let n = self.n();
        (0..n).all(|i| ((i + 1)..n).all(|j| !self.is_tied(i, j)))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.a.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: self.a.len(),
            });
        }
        for i in 0..n {
            if self.get(i, i) != 0 {
                return Err(Error::invalid(format!("score matrix diagonal entry {i} is nonzero")));
            }
            for j in 0..n {
                if i == j {
                    continue;
                }
                let v = self.get(i, j);
                if v != 1 && v != -1 {
                    return Err(Error::invalid(format!("score matrix entry ({i},{j}) = {v}")));
                }
                if v == -1 && self.get(j, i) != 1 {
                    return Err(Error::invalid(format!(
                        "objects {i} and {j} are each ranked behind the other"
                    )));
                }
            }
        }
        Ok(())
    }

    /// The reversed ordering: every strict pair flips, ties stay tied.
    pub fn reversed(&self) -> Self {
        let n = self.n();
        let mut a = self.a.clone();
        for i in 0..n {
            for j in 0..n {
                if i != j && !self.is_tied(i, j) {
                    a[i * n + j] = -self.get(i, j);
                }
            }
        }
        ScoreMatrix {
            ids: self.ids.clone(),
            a,
        }
    }

    /// Marks every pair tied in `reference` as tied here as well.
    pub fn with_ties_of(&self, reference: &ScoreMatrix) -> Result<Self> {
        check_compatible(reference, self)?;
        let n = self.n();
        let mut a = self.a.clone();
        for i in 0..n {
            for j in 0..n {
                if reference.is_tied(i, j) {
                    a[i * n + j] = 1;
                }
            }
        }
        Ok(ScoreMatrix {
            ids: self.ids.clone(),
            a,
        })
    }
}

fn check_compatible(a: &ScoreMatrix, b: &ScoreMatrix) -> Result<()> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            got: b.n(),
        });
    }
    if a.ids != b.ids {
        return Err(Error::invalid("score matrices are indexed by different ids"));
    }
    Ok(())
}

/// Weak ordering induced by values with a tie threshold: objects whose
/// values differ by at most `threshold` are tied. Matrix indexing follows
/// the ascending id order of the map.
pub fn weak_ordering_from_values(values: &BTreeMap<String, f64>, threshold: f64) -> Result<ScoreMatrix> {
    if !(threshold >= 0.0) {
        return Err(Error::invalid(format!("tie threshold must be non-negative, got {threshold}")));
    }
    let ids: Vec<String> = values.keys().cloned().collect();
    let v: Vec<f64> = values.values().copied().collect();
    if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("non-finite value {bad}")));
    }
    Ok(ScoreMatrix::from_relation(ids, |i, j| {
        v[i] > v[j] || (v[i] - v[j]).abs() <= threshold
    }))
}

/// Emond–Mason τ_x: the normalised dot product of two score matrices.
pub fn tau_x(a: &ScoreMatrix, b: &ScoreMatrix) -> Result<f64> {
    check_compatible(a, b)?;
    let n = a.n();
    if n < 2 {
        return Err(Error::invalid("tau_x needs at least two objects"));
    }
    let dot: i64 = a
        .entries()
        .iter()
        .zip(b.entries())
        .map(|(&x, &y)| i64::from(x) * i64::from(y))
        .sum();
    Ok(dot as f64 / (n * (n - 1)) as f64)
}

/// τ_x after copying the reference's ties into the candidate.
pub fn tau_x_projected(reference: &ScoreMatrix, candidate: &ScoreMatrix) -> Result<f64> {
    let projected = candidate.with_ties_of(reference)?;
    tau_x(reference, &projected)
}

/// Number of ordered pairs `(i, j)`, `i != j`, that are tied.
pub fn count_tied_pairs(ordering: &ScoreMatrix) -> usize {
    let n = ordering.n();
    let mut count = 0;
    for i in 0..n {
        for j in 0..n {
            if ordering.is_tied(i, j) {
                count += 1;
            }
        }
    }
    count
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TauMode {
    Strict,
    #[default]
    Projected,
}

impl TauMode {
    pub fn tau(self, reference: &ScoreMatrix, candidate: &ScoreMatrix) -> Result<f64> {
        match self {
            TauMode::Strict => tau_x(reference, candidate),
            TauMode::Projected => tau_x_projected(reference, candidate),
        }
    }
}

impl std::str::FromStr for TauMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(TauMode::Strict),
            "projected" => Ok(TauMode::Projected),
            _ => Err(Error::invalid(format!("unknown tau mode `{s}`"))),
        }
    }
}

/// τ_x values over a coefficient grid together with their AUC-ERC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauReport {
    pub coefficients: Vec<f64>,
    pub tau_values: Vec<f64>,
    pub auc_erc: f64,
}

impl TauReport {
    pub fn new(coefficients: Vec<f64>, tau_values: Vec<f64>) -> Result<Self> {
        let auc_erc = auc_erc(&coefficients, &tau_values)?;
        Ok(TauReport {
            coefficients,
            tau_values,
            auc_erc,
        })
    }
}

/// Area under the τ_x-versus-tie-coefficient curve (composite trapezoid).
pub fn auc_erc(coefficients: &[f64], tau_values: &[f64]) -> Result<f64> {
    if coefficients.len() != tau_values.len() {
        return Err(Error::DimensionMismatch {
            expected: coefficients.len(),
            got: tau_values.len(),
        });
    }
    if coefficients.len() < 2 {
        return Err(Error::invalid("AUC-ERC needs at least two points"));
    }
    if coefficients.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("coefficients must be strictly increasing"));
    }
    Ok(coefficients
        .windows(2)
        .zip(tau_values.windows(2))
        .map(|(c, t)| (c[1] - c[0]) * (t[0] + t[1]) / 2.0)
        .sum())
}

/// Mean τ_x of `n_perms` uniformly random strict orderings against the
/// reference. Permutation `k` draws from its own ChaCha stream of `seed`,
/// so the result does not depend on scheduling.
pub fn random_baseline(reference: &ScoreMatrix, n_perms: usize, seed: u64, mode: TauMode) -> Result<f64> {
    let n = reference.n();
    if n < 2 {
        return Err(Error::invalid("random baseline needs at least two objects"));
    }
    if n_perms == 0 {
        return Err(Error::invalid("n_perms must be positive"));
    }
    let taus: Vec<f64> = (0..n_perms)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let candidate = ScoreMatrix::from_permutation(reference.ids().to_vec(), &order)?;
            mode.tau(reference, &candidate)
        })
        .collect::<Result<_>>()?;
    Ok(taus.iter().sum::<f64>() / n_perms as f64)
}

/// Population standard deviation (divides by N).
pub fn population_std(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn values(v: &[f64]) -> BTreeMap<String, f64> {
        v.iter().enumerate().map(|(i, &x)| (format!("n{i}"), x)).collect()
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("n{i}")).collect()
    }

    #[test]
    fn strict_chain_without_threshold() {
        let m = weak_ordering_from_values(&values(&[0.9, 0.5, 0.1]), 0.0).unwrap();
        assert_eq!(m.entries(), &[0, 1, 1, -1, 0, 1, -1, -1, 0]);
        assert!(m.is_strict());
        m.validate().unwrap();
    }

    #[test]
    fn ties_from_threshold_are_intransitive() {
        let m = weak_ordering_from_values(&values(&[0.50, 0.52, 0.54]), 0.03).unwrap();
        assert!(m.is_tied(0, 1));
        assert!(m.is_tied(1, 2));
        assert!(!m.is_tied(0, 2));
        assert_eq!(m.get(2, 0), 1);
        assert_eq!(m.get(0, 2), -1);
        assert_eq!(count_tied_pairs(&m), 4);
    }

    #[test]
    fn saturated_threshold_ties_everything() {
        let m = weak_ordering_from_values(&values(&[0.1, 0.7, 0.3]), 0.6).unwrap();
        assert_eq!(count_tied_pairs(&m), 6);
    }

    #[test]
    fn negative_threshold_rejected() {
        assert!(weak_ordering_from_values(&values(&[0.1, 0.2]), -0.1).is_err());
    }

    #[test]
    fn tau_self_and_reversal() {
        let a = weak_ordering_from_values(&values(&[0.9, 0.5, 0.1, 0.3]), 0.0).unwrap();
        assert_eq!(tau_x(&a, &a).unwrap(), 1.0);
        assert_eq!(tau_x(&a, &a.reversed()).unwrap(), -1.0);
    }

    #[test]
    fn tau_tied_versus_strict_hand_computed() {
        // A: 1 ahead of 2 and 3, 2 ~ 3. B: 1 > 2 > 3.
        let a = ScoreMatrix::from_raw(ids(3), vec![0, 1, 1, -1, 0, 1, -1, 1, 0]).unwrap();
        let b = ScoreMatrix::from_permutation(ids(3), &[0, 1, 2]).unwrap();
        assert!((tau_x(&a, &b).unwrap() - 4.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn tau_dimension_mismatch() {
        let a = ScoreMatrix::from_permutation(ids(3), &[0, 1, 2]).unwrap();
        let b = ScoreMatrix::from_permutation(ids(2), &[0, 1]).unwrap();
        assert!(matches!(tau_x(&a, &b), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn raw_matrix_rejects_mutually_behind() {
        assert!(ScoreMatrix::from_raw(ids(2), vec![0, -1, -1, 0]).is_err());
        assert!(ScoreMatrix::from_raw(ids(2), vec![1, 1, 1, 0]).is_err());
    }

    #[test]
    fn projected_saturates_on_all_tied_reference() {
        let reference = weak_ordering_from_values(&values(&[0.1, 0.2, 0.3]), 1.0).unwrap();
        let cand = ScoreMatrix::from_permutation(ids(3), &[2, 0, 1]).unwrap();
        assert_eq!(tau_x_projected(&reference, &cand).unwrap(), 1.0);
    }

    #[test]
    fn projected_equals_strict_on_strict_reference() {
        let reference = weak_ordering_from_values(&values(&[0.1, 0.2, 0.3, 0.9]), 0.0).unwrap();
        let cand = ScoreMatrix::from_permutation(ids(4), &[2, 0, 3, 1]).unwrap();
        assert_eq!(
            tau_x_projected(&reference, &cand).unwrap(),
            tau_x(&reference, &cand).unwrap()
        );
    }

    #[test]
    fn projected_average_over_all_permutations_is_tied_fraction() {
        // values 0.1, 0.12, 0.5 with threshold 0.05: exactly one tied pair.
        let reference = weak_ordering_from_values(&values(&[0.1, 0.12, 0.5]), 0.05).unwrap();
        assert_eq!(count_tied_pairs(&reference), 2);
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let total: f64 = perms
            .iter()
            .map(|p| {
                let c = ScoreMatrix::from_permutation(ids(3), p).unwrap();
                tau_x_projected(&reference, &c).unwrap()
            })
            .sum();
        assert!((total / 6.0 - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn auc_of_table_rows() {
        let c = DEFAULT_COEFFICIENTS;
        let random = auc_erc(&c, &[0.0, 0.09, 0.20, 0.30, 0.40, 0.49]).unwrap();
        assert!((random - 0.247).abs() < 1e-9);
        let model7 = auc_erc(&c, &[0.3539, 0.4504, 0.5256, 0.6347, 0.713, 0.7635]).unwrap();
        assert!((model7 - 0.57648).abs() < 1e-9);
    }

    #[test]
    fn auc_flat_curve_and_errors() {
        assert!((auc_erc(&[0.0, 0.5, 1.0], &[0.3, 0.3, 0.3]).unwrap() - 0.3).abs() < 1e-15);
        assert!(auc_erc(&[0.0], &[1.0]).is_err());
        assert!(auc_erc(&[0.0, 0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn random_baseline_is_seeded() {
        let reference = weak_ordering_from_values(&values(&[0.1, 0.4, 0.2, 0.8, 0.5]), 0.0).unwrap();
        let a = random_baseline(&reference, 1, 3, TauMode::Strict).unwrap();
        let b = random_baseline(&reference, 1, 3, TauMode::Strict).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn population_std_divides_by_n() {
        assert!((population_std([0.0, 1.0]) - 0.5).abs() < 1e-15);
    }
}
