use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::{Result, StatsError};

pub const DEFAULT_DRAWS: usize = 100_000;

/// Gamma prior on a Poisson rate, shape/rate parameterisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonPrior {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for PoissonPrior {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaPosterior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPosterior {
    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoissonABResult {
    pub p_a_gt_b: f64,
    /// Monte Carlo standard error of `p_a_gt_b`.
    pub mc_stderr: f64,
    /// Equal-tailed interval of `rate_a - rate_b`.
    pub rate_diff_ci: (f64, f64),
    pub ci_mass: f64,
    pub posterior_a: GammaPosterior,
    pub posterior_b: GammaPosterior,
    pub draws: usize,
    pub seed: u64,
}

impl std::fmt::Display for PoissonABResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "P(A>B) = {:.4} (mc se {:.4}), {:.0}% CI of rate difference [{:.4}, {:.4}], rates {:.4} vs {:.4}, draws {}, seed {}",
            self.p_a_gt_b,
            self.mc_stderr,
            self.ci_mass * 100.0,
            self.rate_diff_ci.0,
            self.rate_diff_ci.1,
            self.posterior_a.mean(),
            self.posterior_b.mean(),
            self.draws,
            self.seed
        )
    }
}

fn posterior(counts: &[u64], prior: PoissonPrior) -> GammaPosterior {
    GammaPosterior { shape: prior.alpha + counts.iter().sum::<u64>() as f64, rate: prior.beta + counts.len() as f64 }
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Conjugate Gamma-Poisson comparison of two groups of event counts,
/// summarised by seeded Monte Carlo over the two posteriors.
pub fn bayes_ab_poisson(counts_a: &[u64], counts_b: &[u64], prior: PoissonPrior, ci_mass: f64, draws: usize, seed: u64) -> Result<PoissonABResult> {
    if counts_a.is_empty() {
        return Err(StatsError::EmptyGroup("a"));
    }
    if counts_b.is_empty() {
        return Err(StatsError::EmptyGroup("b"));
    }
    if !(prior.alpha > 0.0 && prior.beta > 0.0) {
        return Err(StatsError::InvalidArgument("prior parameters must be positive".into()));
    }
    if !(ci_mass > 0.0 && ci_mass < 1.0) {
        return Err(StatsError::InvalidArgument("ci_mass must lie in (0, 1)".into()));
    }
    if draws < 2 {
        return Err(StatsError::InvalidArgument("need at least 2 draws".into()));
    }
    let post_a = posterior(counts_a, prior);
    let post_b = posterior(counts_b, prior);
    let gamma_a = Gamma::new(post_a.shape, 1.0 / post_a.rate).expect("positive posterior");
    let gamma_b = Gamma::new(post_b.shape, 1.0 / post_b.rate).expect("positive posterior");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut diffs = Vec::with_capacity(draws);
    let mut wins = 0usize;
    for _ in 0..draws {
        let d = gamma_a.sample(&mut rng) - gamma_b.sample(&mut rng);
        wins += (d > 0.0) as usize;
        diffs.push(d);
    }
    diffs.sort_by(f64::total_cmp);
    let p = wins as f64 / draws as f64;
    let tail = (1.0 - ci_mass) / 2.0;
    Ok(PoissonABResult {
        p_a_gt_b: p,
        mc_stderr: (p * (1.0 - p) / draws as f64).sqrt(),
        rate_diff_ci: (quantile(&diffs, tail), quantile(&diffs, 1.0 - tail)),
        ci_mass,
        posterior_a: post_a,
        posterior_b: post_b,
        draws,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn beta_tail_oracle() {
        // Posteriors Gamma(7, 3) and Gamma(3, 3); P(X > Y) equals the upper
        // tail of Beta(7, 3) at 1/2, i.e. P(Bin(9, 1/2) <= 6).
        let binom: u64 = (0..=6u64).map(|k| (0..k).fold(1u64, |c, i| c * (9 - i) / (i + 1))).sum();
        let oracle = binom as f64 / 512.0;
        let r = bayes_ab_poisson(&[3, 3], &[1, 1], PoissonPrior::default(), 0.9, DEFAULT_DRAWS, 7).unwrap();
        assert_eq!(r.posterior_a, GammaPosterior { shape: 7.0, rate: 3.0 });
        assert!((r.p_a_gt_b - oracle).abs() < 0.005, "{} vs {oracle}", r.p_a_gt_b);
        assert!(r.rate_diff_ci.0 < r.rate_diff_ci.1);
    }

    #[test]
    fn errors() {
        assert_eq!(bayes_ab_poisson(&[], &[1], PoissonPrior::default(), 0.9, 10, 0), Err(StatsError::EmptyGroup("a")));
        assert!(bayes_ab_poisson(&[1], &[1], PoissonPrior::default(), 1.5, 10, 0).is_err());
    }

    #[test]
    fn seeded() {
        let a = bayes_ab_poisson(&[4, 2], &[1], PoissonPrior::default(), 0.9, 1000, 3).unwrap();
        assert_eq!(a, bayes_ab_poisson(&[4, 2], &[1], PoissonPrior::default(), 0.9, 1000, 3).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn identical_groups_are_even(counts in proptest::collection::vec(0u64..20, 1..6), seed in 0u64..1000) {
            let r = bayes_ab_poisson(&counts, &counts, PoissonPrior::default(), 0.9, 20_000, seed).unwrap();
            prop_assert!((r.p_a_gt_b - 0.5).abs() <= 3.0 * r.mc_stderr + 1e-12);
        }

        #[test]
        fn swapping_groups_reflects(a in proptest::collection::vec(0u64..20, 1..5), b in proptest::collection::vec(0u64..20, 1..5), seed in 0u64..1000) {
            let ab = bayes_ab_poisson(&a, &b, PoissonPrior::default(), 0.9, 20_000, seed).unwrap();
            let ba = bayes_ab_poisson(&b, &a, PoissonPrior::default(), 0.9, 20_000, seed + 1).unwrap();
            let se = (ab.mc_stderr.powi(2) + ba.mc_stderr.powi(2)).sqrt().max(1e-4);
            prop_assert!((ab.p_a_gt_b - (1.0 - ba.p_a_gt_b)).abs() <= 4.0 * se);
            let width = ab.rate_diff_ci.1 - ab.rate_diff_ci.0;
            prop_assert!((ab.rate_diff_ci.0 + ba.rate_diff_ci.1).abs() <= 0.1 * width + 1e-9);
            prop_assert!((ab.rate_diff_ci.1 + ba.rate_diff_ci.0).abs() <= 0.1 * width + 1e-9);
        }
    }
}
