use std::path::Path;

use super::{OtpChoice, OtpProvenance, PolicyError, Result};
use crate::classifier::{ClassifierKind, TrainedClassifier};
use crate::features::{FeatureWindow, TimingKind};
use crate::nn::{predict_class, Head};
use crate::session::Otp;

/// What the policy asks of its classifiers.
pub trait PolicyModels {
    /// Probability that a `kind` transition is due.
    fn timing_probability(&mut self, kind: TimingKind, window: &FeatureWindow) -> f64;
    /// `[left, middle, right]` probabilities.
    fn otp_probabilities(&mut self, window: &FeatureWindow) -> [f64; 3];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OtpPhase {
    Initial,
    Update,
}

/// Arg-max location; ties go to the earlier of Left, Middle, Right.
pub fn choose_otp(models: &mut dyn PolicyModels, window: &FeatureWindow, phase: OtpPhase) -> OtpChoice {
    let p = models.otp_probabilities(window);
    let otp = Otp::from_index(predict_class(Head::ThreeWay, &p)).expect("three classes");
    let provenance = match phase {
        OtpPhase::Initial => OtpProvenance::InitialAtEpisodeStart,
        OtpPhase::Update => OtpProvenance::UpdatedAtTransferStart,
    };
    OtpChoice { otp, provenance }
}

/// The four trained networks.
#[derive(Debug, Clone)]
pub struct ClassifierSet {
    pub ep_start: TrainedClassifier,
    pub otp_start: TrainedClassifier,
    pub otp_complete: TrainedClassifier,
    pub otp_type: TrainedClassifier,
}

impl ClassifierSet {
    pub fn new(models: Vec<TrainedClassifier>) -> Result<Self> {
        let take = |kind: ClassifierKind| {
            models
                .iter()
                .find(|m| m.kind == kind)
                .cloned()
                .ok_or_else(|| PolicyError::ModelMissing(kind.to_string()))
        };
        Ok(Self {
            ep_start: take(ClassifierKind::EpStart)?,
            otp_start: take(ClassifierKind::OtpStart)?,
            otp_complete: take(ClassifierKind::OtpComplete)?,
            otp_type: take(ClassifierKind::OtpType)?,
        })
    }

    /// Loads `<dir>/<kind>.json` for each kind.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let mut models = Vec::new();
        for kind in ClassifierKind::ALL {
            let path = dir.as_ref().join(format!("{kind}.json"));
            if !path.exists() {
                return Err(PolicyError::ModelMissing(format!("{kind} ({})", path.display())));
            }
            models.push(TrainedClassifier::load(&path, *kind)?);
        }
        Self::new(models)
    }

    pub fn timing(&self, kind: TimingKind) -> &TrainedClassifier {
        match kind {
            TimingKind::EpStart => &self.ep_start,
            TimingKind::OtpStart => &self.otp_start,
            TimingKind::OtpComplete => &self.otp_complete,
        }
    }
}

impl PolicyModels for ClassifierSet {
    fn timing_probability(&mut self, kind: TimingKind, window: &FeatureWindow) -> f64 {
        self.timing(kind).probabilities(window)[0]
    }

    fn otp_probabilities(&mut self, window: &FeatureWindow) -> [f64; 3] {
        let p = self.otp_type.probabilities(window);
        [p[0], p[1], p[2]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::WINDOW_CELLS;
    use crate::nn::{ModelWeights, NetworkSpec};

    struct Fixed([f64; 3]);

    impl PolicyModels for Fixed {
        fn timing_probability(&mut self, _: TimingKind, _: &FeatureWindow) -> f64 {
            0.0
        }

        fn otp_probabilities(&mut self, _: &FeatureWindow) -> [f64; 3] {
            self.0
        }
    }

    #[test]
    fn uniform_output_picks_left() {
        let w = FeatureWindow::from_values(vec![0.0; WINDOW_CELLS]).unwrap();
        let c = choose_otp(&mut Fixed([1.0 / 3.0; 3]), &w, OtpPhase::Initial);
        assert_eq!(c, OtpChoice { otp: Otp::Left, provenance: OtpProvenance::InitialAtEpisodeStart });
        let c = choose_otp(&mut Fixed([0.2, 0.4, 0.4]), &w, OtpPhase::Update);
        assert_eq!(c.otp, Otp::Middle);
    }

    #[test]
    fn set_needs_every_kind() {
        let spec = NetworkSpec::handover(Head::Binary);
        let one = TrainedClassifier { kind: ClassifierKind::EpStart, weights: ModelWeights::zeros(&spec), spec, fit: None };
        assert!(matches!(ClassifierSet::new(vec![one]), Err(PolicyError::ModelMissing(k)) if k == "otp_start"));
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(ClassifierSet::load(dir.path()), Err(PolicyError::ModelMissing(_))));
    }
}
