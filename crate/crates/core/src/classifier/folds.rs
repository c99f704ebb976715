use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{ClassifierError, Result};
use crate::session::SessionRecord;

pub const FOLDS: usize = 5;

named_enum! {
    pub enum FoldMode {
        ByEpisode => "by_episode",
        ByParticipant => "by_participant",
    }
}

/// The unit a fold assignment is made for.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum FoldUnit {
    Participant(String),
    /// The `index`-th episode (0-based, temporal) of a participant.
    Episode { participant: String, index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldSpec {
    pub mode: FoldMode,
    pub k: usize,
    pub assignments: BTreeMap<FoldUnit, usize>,
}

impl FoldSpec {
    /// Folds from per-participant episode counts, listed in temporal order.
    /// Repeated participants have their counts summed.
    pub fn from_episode_counts(counts: &[(String, usize)], mode: FoldMode, seed: u64) -> Result<Self> {
        let mut totals: BTreeMap<&str, usize> = BTreeMap::new();
        for (p, n) in counts {
            *totals.entry(p.as_str()).or_default() += n;
        }
        let mut assignments = BTreeMap::new();
        match mode {
            FoldMode::ByParticipant => {
                if totals.len() < FOLDS {
                    return Err(ClassifierError::TooFewUnits { mode, needed: FOLDS, got: totals.len() });
                }
                let mut ids: Vec<&str> = totals.keys().copied().collect();
                ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
                for (i, id) in ids.into_iter().enumerate() {
                    assignments.insert(FoldUnit::Participant(id.to_string()), i % FOLDS);
                }
            }
            FoldMode::ByEpisode => {
                for (&p, &n) in &totals {
                    if n < FOLDS {
                        return Err(ClassifierError::TooFewUnits { mode, needed: FOLDS, got: n });
                    }
                    for index in 0..n {
                        assignments.insert(FoldUnit::Episode { participant: p.to_string(), index }, index * FOLDS / n);
                    }
                }
            }
        }
        Ok(Self { mode, k: FOLDS, assignments })
    }

    pub fn fold_of(&self, unit: &FoldUnit) -> Option<usize> {
        self.assignments.get(unit).copied()
    }

    pub fn units_in(&self, fold: usize) -> Vec<&FoldUnit> {
        self.assignments.iter().filter(|(_, &f)| f == fold).map(|(u, _)| u).collect()
    }

    /// Fold of every step of every session; `None` for steps outside any
    /// episode unit (only in sessions without episodes under `ByEpisode`).
    pub fn step_folds(&self, sessions: &[SessionRecord]) -> Vec<Vec<Option<usize>>> {
        let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
        sessions
            .iter()
            .map(|s| match self.mode {
                FoldMode::ByParticipant => vec![self.fold_of(&FoldUnit::Participant(s.participant_id.clone())); s.len()],
                FoldMode::ByEpisode => {
                    let offset = *seen.get(s.participant_id.as_str()).unwrap_or(&0);
                    seen.insert(&s.participant_id, offset + s.episodes.len());
                    s.episode_of_step()
                        .into_iter()
                        .map(|e| {
                            e.and_then(|e| {
                                self.fold_of(&FoldUnit::Episode { participant: s.participant_id.clone(), index: offset + e })
                            })
                        })
                        .collect()
                }
            })
            .collect()
    }
}

/// Episode counts per session in order, the input to [`FoldSpec::from_episode_counts`].
pub fn episode_counts(sessions: &[SessionRecord]) -> Vec<(String, usize)> {
    sessions.iter().map(|s| (s.participant_id.clone(), s.episodes.len())).collect()
}

pub fn make_folds(sessions: &[SessionRecord], mode: FoldMode, seed: u64) -> Result<FoldSpec> {
    FoldSpec::from_episode_counts(&episode_counts(sessions), mode, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counts(n: &[usize]) -> Vec<(String, usize)> {
        n.iter().enumerate().map(|(i, &n)| (format!("p{i:02}"), n)).collect()
    }

    #[test]
    fn twenty_participants_four_per_fold() {
        let f = FoldSpec::from_episode_counts(&counts(&[3; 20]), FoldMode::ByParticipant, 1).unwrap();
        for fold in 0..FOLDS {
            assert_eq!(f.units_in(fold).len(), 4);
        }
        let g = FoldSpec::from_episode_counts(&counts(&[3; 20]), FoldMode::ByParticipant, 2).unwrap();
        assert_ne!(f, g);
    }

    #[test]
    fn twenty_five_episodes_in_quintiles() {
        let f = FoldSpec::from_episode_counts(&counts(&[25]), FoldMode::ByEpisode, 0).unwrap();
        for index in 0..25 {
            assert_eq!(f.fold_of(&FoldUnit::Episode { participant: "p00".into(), index }), Some(index / 5));
        }
    }

    #[test]
    fn too_few_units() {
        assert!(matches!(
            FoldSpec::from_episode_counts(&counts(&[9; 4]), FoldMode::ByParticipant, 0),
            Err(ClassifierError::TooFewUnits { needed: 5, got: 4, .. })
        ));
        assert!(matches!(
            FoldSpec::from_episode_counts(&counts(&[9, 4]), FoldMode::ByEpisode, 0),
            Err(ClassifierError::TooFewUnits { got: 4, .. })
        ));
    }

    #[test]
    fn sessions_of_one_participant_are_concatenated() {
        let c = vec![("a".to_string(), 3), ("a".to_string(), 7)];
        let f = FoldSpec::from_episode_counts(&c, FoldMode::ByEpisode, 0).unwrap();
        assert_eq!(f.assignments.len(), 10);
        assert_eq!(f.fold_of(&FoldUnit::Episode { participant: "a".into(), index: 9 }), Some(4));
    }

    proptest! {
        #[test]
        fn folds_partition_units(n in proptest::collection::vec(5usize..40, 5..30), seed in any::<u64>()) {
            for mode in FoldMode::ALL {
                let f = FoldSpec::from_episode_counts(&counts(&n), *mode, seed).unwrap();
                let expected = match mode {
                    FoldMode::ByParticipant => n.len(),
                    FoldMode::ByEpisode => n.iter().sum(),
                };
                let per_fold: usize = (0..FOLDS).map(|k| f.units_in(k).len()).sum();
                prop_assert_eq!(per_fold, expected);
                prop_assert_eq!(f.assignments.len(), expected);
                prop_assert!(f.assignments.values().all(|&k| k < FOLDS));
            }
        }
    }
}
