use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonResult {
    /// Sum of the ranks of the positive differences `y - x`.
    pub statistic: f64,
    /// Two-sided p-value, normal approximation with continuity correction.
    pub p_value: f64,
    /// Number of pairs left after dropping zero differences.
    pub n: usize,
}

/// Wilcoxon signed-rank test on paired samples.
///
/// Zero differences are dropped, tied absolute differences share their
/// average rank and the variance carries the usual tie correction.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<WilcoxonResult> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let diffs: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| b - a)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.is_empty() {
        return Err(Error::Degenerate("all differences are zero".into()));
    }
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::invalid("non-finite difference"));
    }
    let n = diffs.len();
    if n < 5 {
        return Err(Error::invalid(format!(
            "signed-rank test needs at least 5 nonzero differences, got {n}"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| diffs[a].abs().total_cmp(&diffs[b].abs()));
    let mut ranks = vec![0.0; n];
    let mut tie_term = 0.0;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && diffs[order[end]].abs() == diffs[order[start]].abs() {
            end += 1;
        }
        // ranks start..end (1-based start+1..=end) share their mean
        let avg = (start + 1 + end) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = avg;
        }
        let t = (end - start) as f64;
        tie_term += t * t * t - t;
        start = end;
    }

    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let dev = w_plus - mean;
    let p_value = if var <= 0.0 {
        1.0
    } else {
        let z = (dev.abs() - 0.5).max(0.0) / var.sqrt();
        let normal = Normal::standard();
        (2.0 * (1.0 - normal.cdf(z))).min(1.0)
    };
    Ok(WilcoxonResult {
        statistic: w_plus,
        p_value,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_difference_dropped() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let y = [1.0, 2.5, 3.2, 4.9, 5.1, 6.7];
        let r = wilcoxon_signed_rank(&x, &y).unwrap();
        assert_eq!(r.n, 5);
        assert_eq!(r.statistic, 15.0);
    }

    #[test]
    fn all_zero_is_degenerate() {
        let x = [1.0; 6];
        assert!(matches!(
            wilcoxon_signed_rank(&x, &x),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn too_few_pairs() {
        assert!(wilcoxon_signed_rank(&[1.0, 2.0], &[2.0, 3.0]).is_err());
    }

    #[test]
    fn antisymmetric_in_arguments() {
        let x = [0.3, 0.1, 0.8, 0.5, 0.9, 0.2, 0.4];
        let y = [0.35, 0.0, 0.6, 0.9, 0.1, 0.25, 0.45];
        let a = wilcoxon_signed_rank(&x, &y).unwrap();
        let b = wilcoxon_signed_rank(&y, &x).unwrap();
        let total = (a.n * (a.n + 1)) as f64 / 2.0;
        assert!((a.statistic + b.statistic - total).abs() < 1e-12);
        assert!((a.p_value - b.p_value).abs() < 1e-12);
    }
}
