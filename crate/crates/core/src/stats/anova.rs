use serde::Serialize;

use super::special::f_upper_tail;
use super::{Result, StatsError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnovaResult {
    pub f: f64,
    pub p: f64,
    pub eta_sq: f64,
    pub ss_between: f64,
    pub ss_within: f64,
    pub df_between: usize,
    pub df_within: usize,
}

impl std::fmt::Display for AnovaResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "F({}, {}) = {:.4}, p = {:.4}, eta^2 = {:.4}", self.df_between, self.df_within, self.f, self.p, self.eta_sq)
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn one_way_anova<G: AsRef<[f64]>>(groups: &[G]) -> Result<AnovaResult> {
    if groups.len() < 2 {
        return Err(StatsError::TooFew { what: "groups", needed: 2, got: groups.len() });
    }
    if let Some(g) = groups.iter().find(|g| g.as_ref().len() < 2) {
        return Err(StatsError::TooFew { what: "samples per group", needed: 2, got: g.as_ref().len() });
    }
    if groups.iter().flat_map(|g| g.as_ref()).any(|v| !v.is_finite()) {
        return Err(StatsError::InvalidArgument("non-finite sample".into()));
    }
    let all: Vec<f64> = groups.iter().flat_map(|g| g.as_ref().iter().copied()).collect();
    let grand = mean(&all);
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in groups {
        let g = g.as_ref();
        let m = mean(g);
        ssb += g.len() as f64 * (m - grand).powi(2);
        ssw += g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    let df_between = groups.len() - 1;
    let df_within = all.len() - groups.len();
    if ssb + ssw == 0.0 {
        return Err(StatsError::DegenerateInput("all samples are equal".into()));
    }
    let f = if ssw == 0.0 { f64::INFINITY } else { (ssb / df_between as f64) / (ssw / df_within as f64) };
    Ok(AnovaResult {
        f,
        p: f_upper_tail(f, df_between as f64, df_within as f64),
        eta_sq: ssb / (ssb + ssw),
        ss_between: ssb,
        ss_within: ssw,
        df_between,
        df_within,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_computed_sums_of_squares() {
        let r = one_way_anova(&[vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0], vec![3.0, 4.0, 5.0]]).unwrap();
        assert!((r.ss_between - 6.0).abs() < 1e-12);
        assert!((r.ss_within - 6.0).abs() < 1e-12);
        assert_eq!((r.df_between, r.df_within), (2, 6));
        assert!((r.f - 3.0).abs() < 1e-9);
        assert!((r.eta_sq - 0.5).abs() < 1e-9);
        assert!((r.p - 0.125).abs() < 1e-9);
    }

    #[test]
    fn equal_means_give_zero() {
        let r = one_way_anova(&[[1.0, 3.0], [0.0, 4.0]]).unwrap();
        assert_eq!(r.f, 0.0);
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(one_way_anova(&[[2.0, 2.0], [2.0, 2.0]]), Err(StatsError::DegenerateInput(_))));
        assert!(matches!(one_way_anova(&[[1.0, 2.0]]), Err(StatsError::TooFew { .. })));
        assert!(matches!(one_way_anova(&[vec![1.0, 2.0], vec![1.0]]), Err(StatsError::TooFew { .. })));
        let r = one_way_anova(&[[1.0, 1.0], [2.0, 2.0]]).unwrap();
        assert!(r.f.is_infinite() && r.p == 0.0 && r.eta_sq == 1.0);
    }

    proptest! {
        #[test]
        fn f_is_location_and_scale_invariant(
            groups in proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, 2..6), 2..5),
            shift in -100.0f64..100.0,
            scale in 0.1f64..10.0,
        ) {
            let base = one_way_anova(&groups);
            prop_assume!(base.is_ok());
            let base = base.unwrap();
            prop_assume!(base.f.is_finite() && base.ss_within > 1e-6);
            let moved: Vec<Vec<f64>> = groups.iter().map(|g| g.iter().map(|v| v * scale + shift).collect()).collect();
            let r = one_way_anova(&moved).unwrap();
            prop_assert!((r.f - base.f).abs() <= 1e-6 * base.f.max(1.0));
            prop_assert!((r.eta_sq - base.eta_sq).abs() <= 1e-9);
            prop_assert!(r.f >= 0.0 && (0.0..=1.0).contains(&r.eta_sq));
        }
    }
}
