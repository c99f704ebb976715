use serde::Serialize;

use super::special::normal_two_sided;
use super::{Result, StatsError};

/// Below this many non-zero differences the p-value is computed exactly.
pub const NORMAL_APPROX_MIN: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WilcoxonResult {
    /// Sum of ranks of positive differences.
    pub v: f64,
    /// Sum of ranks of negative differences.
    pub v_neg: f64,
    pub p: f64,
    pub n_effective: usize,
    pub method: PValueMethod,
}

impl std::fmt::Display for WilcoxonResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let method = match self.method {
            PValueMethod::Exact => "exact",
            PValueMethod::NormalApprox => "normal approx.",
        };
        write!(f, "V = {}, p = {:.4} ({method}), n = {}", self.v, self.p, self.n_effective)
    }
}

/// Average ranks of `values` (1-based), ties sharing the mean of their positions.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Signed-rank test on paired samples, `x - y` per pair.
pub fn wilcoxon_signed_rank(pairs: &[(f64, f64)]) -> Result<WilcoxonResult> {
    let diffs: Vec<f64> = pairs.iter().map(|(x, y)| x - y).collect();
    wilcoxon_from_differences(&diffs)
}

pub fn wilcoxon_from_differences(diffs: &[f64]) -> Result<WilcoxonResult> {
    if diffs.is_empty() {
        return Err(StatsError::TooFewPairs);
    }
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(StatsError::InvalidArgument("non-finite difference".into()));
    }
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    if nonzero.is_empty() {
        return Err(StatsError::AllZeroDifferences);
    }
    let m = nonzero.len();
    let abs: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs);
    let v: f64 = nonzero.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total = (m * (m + 1)) as f64 / 2.0;
    let center = total / 2.0;

    let (p, method) = if m < NORMAL_APPROX_MIN {
        // Every sign assignment of the observed ranks is equally likely under H0.
        let observed = (v - center).abs();
        let extreme = (0u32..1 << m)
            .filter(|mask| {
                let s: f64 = (0..m).filter(|k| mask & (1 << k) != 0).map(|k| ranks[k]).sum();
                (s - center).abs() >= observed - 1e-9
            })
            .count();
        (extreme as f64 / (1u64 << m) as f64, PValueMethod::Exact)
    } else {
        let mut tie_term = 0.0;
        let mut sorted = abs.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < sorted.len() {
            let j = sorted[i..].iter().take_while(|&&x| x == sorted[i]).count();
            tie_term += (j * j * j - j) as f64;
            i += j;
        }
        let var = (m * (m + 1) * (2 * m + 1)) as f64 / 24.0 - tie_term / 48.0;
        let z = ((v - center).abs() - 0.5).max(0.0) / var.sqrt();
        (normal_two_sided(z).min(1.0), PValueMethod::NormalApprox)
    };
    Ok(WilcoxonResult { v, v_neg: total - v, p, n_effective: m, method })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_ranked_example() {
        let r = wilcoxon_from_differences(&[1.0, -2.0, 3.0, -4.0, 5.0]).unwrap();
        assert_eq!(r.v, 9.0);
        assert_eq!(r.v_neg, 6.0);
        assert_eq!(r.method, PValueMethod::Exact);
        // |V - 7.5| >= 1.5 for all but the 6 subsets summing to 7 or 8.
        assert!((r.p - 26.0 / 32.0).abs() < 1e-12);
    }

    #[test]
    fn all_positive_is_maximal() {
        let d: Vec<f64> = (1..=10).map(f64::from).collect();
        let r = wilcoxon_from_differences(&d).unwrap();
        assert_eq!(r.v, 55.0);
        assert_eq!(r.method, PValueMethod::NormalApprox);
        // z = (27.5 - 0.5) / sqrt(96.25)
        let z = 27.0 / 96.25f64.sqrt();
        assert!((r.p - normal_two_sided(z)).abs() < 1e-12);
        assert!(r.p < 0.01);
    }

    #[test]
    fn zeros_ties_and_errors() {
        assert_eq!(wilcoxon_from_differences(&[0.0, 0.0]), Err(StatsError::AllZeroDifferences));
        assert_eq!(wilcoxon_signed_rank(&[]), Err(StatsError::TooFewPairs));
        let r = wilcoxon_signed_rank(&[(3.0, 1.0), (1.0, 1.0), (0.0, 2.0), (5.0, 4.0)]).unwrap();
        // |d| = 2, 2, 1 -> ranks 2.5, 2.5, 1
        assert_eq!(r.n_effective, 3);
        assert_eq!(r.v, 3.5);
        assert_eq!(average_ranks(&[2.0, 1.0, 2.0, 2.0]), vec![3.0, 1.0, 3.0, 3.0]);
    }

    proptest! {
        #[test]
        fn rank_sums_partition(d in proptest::collection::vec(-5i32..=5, 1..30)) {
            let d: Vec<f64> = d.into_iter().map(f64::from).collect();
            prop_assume!(d.iter().any(|&x| x != 0.0));
            let r = wilcoxon_from_differences(&d).unwrap();
            let m = r.n_effective as f64;
            prop_assert_eq!(r.v + r.v_neg, m * (m + 1.0) / 2.0);
            prop_assert!(r.v >= 0.0 && r.v <= m * (m + 1.0) / 2.0);
            prop_assert!((0.0..=1.0).contains(&r.p));
        }
    }
}
