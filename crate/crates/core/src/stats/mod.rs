//! Episode summaries and the hypothesis tests used to compare sessions:
//! Bayesian Poisson A/B, one-way ANOVA and the Wilcoxon signed-rank test.

mod anova;
mod bayes;
mod episodes;
pub mod special;
mod wilcoxon;

use thiserror::Error;

pub use anova::{one_way_anova, AnovaResult};
pub use bayes::{bayes_ab_poisson, GammaPosterior, PoissonABResult, PoissonPrior, DEFAULT_DRAWS};
pub use episodes::{episode_stats, EpisodeStatsTable, MeanStd, ParticipantStats};
pub use wilcoxon::{wilcoxon_from_differences, wilcoxon_signed_rank, PValueMethod, WilcoxonResult};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("group {0} is empty")]
    EmptyGroup(&'static str),
    #[error("no annotated episodes")]
    NoEpisodes,
    #[error("need at least {needed} {what}, got {got}")]
    TooFew { what: &'static str, needed: usize, got: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("all differences are zero")]
    AllZeroDifferences,
    #[error("no pairs given")]
    TooFewPairs,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, StatsError>;
