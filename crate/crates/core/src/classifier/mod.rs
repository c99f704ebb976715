//! The four handover classifiers, their training sets, and the two
//! cross-validation protocols.

mod cv;
mod folds;

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use cv::{cross_validate, cross_validate_with, evaluate_by_episode_position, format_cv_table, CvReport, CvRun, PositionReport};
pub use folds::{episode_counts, make_folds, FoldMode, FoldSpec, FoldUnit, FOLDS};

use crate::features::{
    augment_otp, build_windows, downsample_negatives, label_timing_windows, otp_training_windows, AugmentationSummary,
    ClassLabel, FeatureError, FeatureWindow, LabeledWindow, MirrorMap, TimingKind, HORIZON_STEPS,
};
use crate::nn::{self, fit, predict_class, Dataset, FitReport, Head, ModelFile, ModelWeights, NetworkSpec, NnError, TrainConfig};
use crate::session::SessionRecord;

named_enum! {
    pub enum ClassifierKind {
        EpStart => "ep_start",
        OtpStart => "otp_start",
        OtpComplete => "otp_complete",
        OtpType => "otp_type",
    }
}

impl ClassifierKind {
    pub fn head(self) -> Head {
        match self {
            ClassifierKind::OtpType => Head::ThreeWay,
            _ => Head::Binary,
        }
    }

    pub fn timing(self) -> Option<TimingKind> {
        match self {
            ClassifierKind::EpStart => Some(TimingKind::EpStart),
            ClassifierKind::OtpStart => Some(TimingKind::OtpStart),
            ClassifierKind::OtpComplete => Some(TimingKind::OtpComplete),
            ClassifierKind::OtpType => None,
        }
    }
}

impl From<TimingKind> for ClassifierKind {
    fn from(k: TimingKind) -> Self {
        match k {
            TimingKind::EpStart => ClassifierKind::EpStart,
            TimingKind::OtpStart => ClassifierKind::OtpStart,
            TimingKind::OtpComplete => ClassifierKind::OtpComplete,
        }
    }
}

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("{mode} folds need at least {needed} units, got {got}")]
    TooFewUnits { mode: FoldMode, needed: usize, got: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("test window {0} also used for training")]
    Leakage(String),
    #[error("model file holds a {found} classifier, expected {expected}")]
    KindMismatch { found: String, expected: ClassifierKind },
}

pub type Result<T> = std::result::Result<T, ClassifierError>;

/// Integer-labelled window, the common currency of training and evaluation.
pub type Sample = LabeledWindow<usize>;

pub fn to_samples<L: ClassLabel>(labeled: Vec<LabeledWindow<L>>) -> Vec<Sample> {
    labeled.into_iter().map(|l| LabeledWindow { label: l.label.class_index(), window: l.window }).collect()
}

pub fn to_dataset(samples: &[Sample]) -> Dataset {
    let mut d = Dataset::new(crate::features::WINDOW_CELLS);
    for s in samples {
        d.push(s.window.values(), s.label);
    }
    d
}

/// Splits off `fraction` of each class (at least one sample where the class
/// has two or more) as a validation set. Returns `(train, val)`.
pub fn stratified_split(samples: Vec<Sample>, fraction: f64, seed: u64) -> Result<(Vec<Sample>, Vec<Sample>)> {
    if samples.len() < 2 {
        return Err(ClassifierError::InsufficientData(format!("{} samples, need at least 2 to split", samples.len())));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        by_class.entry(s.label).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut to_val = vec![false; samples.len()];
    for idx in by_class.values_mut() {
        idx.shuffle(&mut rng);
        let mut k = (idx.len() as f64 * fraction).round() as usize;
        if idx.len() >= 2 {
            k = k.clamp(1, idx.len() - 1);
        } else {
            k = 0;
        }
        for &i in &idx[..k] {
            to_val[i] = true;
        }
    }
    if !to_val.iter().any(|&v| v) {
        to_val[0] = true;
    }
    let (val, train): (Vec<_>, Vec<_>) = samples.into_iter().zip(to_val).partition(|(_, v)| *v);
    Ok((train.into_iter().map(|(s, _)| s).collect(), val.into_iter().map(|(s, _)| s).collect()))
}

/// A trained network together with what it predicts.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedClassifier {
    pub kind: ClassifierKind,
    pub spec: NetworkSpec,
    pub weights: ModelWeights,
    pub fit: Option<FitReport>,
}

impl TrainedClassifier {
    /// Class probabilities for one window: `[p_true]` or `[p_left, p_middle, p_right]`.
    pub fn probabilities(&self, window: &FeatureWindow) -> Vec<f64> {
        self.probabilities_of(window.values())
    }

    pub fn probabilities_of(&self, values: &[f64]) -> Vec<f64> {
        let mut net = nn::Network::new(&self.spec).expect("validated spec");
        let mut out = vec![0.0; self.spec.head.units()];
        net.probabilities(&self.weights, values, &mut out);
        out
    }

    pub fn predict(&self, window: &FeatureWindow) -> usize {
        predict_class(self.spec.head, &self.probabilities(window))
    }

    pub fn accuracy(&self, samples: &[Sample]) -> f64 {
        if samples.is_empty() {
            return f64::NAN;
        }
        let mut net = nn::Network::new(&self.spec).expect("validated spec");
        let mut out = vec![0.0; self.spec.head.units()];
        let hits = samples
            .iter()
            .filter(|s| {
                net.probabilities(&self.weights, s.window.values(), &mut out);
                predict_class(self.spec.head, &out) == s.label
            })
            .count();
        hits as f64 / samples.len() as f64
    }

    pub fn to_model_file(&self) -> ModelFile {
        let mut m = ModelFile::new(self.spec.clone(), self.weights.clone());
        m.kind = Some(self.kind.to_string());
        if let Some(r) = &self.fit {
            m.metadata.insert("best_epoch".into(), r.best_epoch.to_string());
            m.metadata.insert("epochs_run".into(), r.epochs_run.to_string());
        }
        m
    }

    pub fn from_model_file(m: ModelFile) -> Result<Self> {
        let found = m.kind.clone().unwrap_or_default();
        let kind: ClassifierKind = found
            .parse()
            .map_err(|_| ClassifierError::Nn(NnError::CorruptFile(format!("unknown classifier kind `{found}`"))))?;
        if m.spec.head != kind.head() {
            return Err(ClassifierError::Nn(NnError::CorruptFile(format!("{kind} model with a {} head", m.spec.head))));
        }
        Ok(Self { kind, spec: m.spec, weights: m.weights, fit: None })
    }

    pub fn load(path: impl AsRef<std::path::Path>, expected: ClassifierKind) -> Result<Self> {
        let c = Self::from_model_file(nn::load_model(path)?)?;
        if c.kind != expected {
            return Err(ClassifierError::KindMismatch { found: c.kind.to_string(), expected });
        }
        Ok(c)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        nn::save_model(path, &self.to_model_file())?;
        Ok(())
    }
}

/// Trains one classifier on an already balanced (timing) or augmented
/// (location) training set; a stratified `val_fraction` of it drives early
/// stopping.
pub fn train_classifier(kind: ClassifierKind, samples: Vec<Sample>, config: &TrainConfig) -> Result<TrainedClassifier> {
    if samples.is_empty() {
        return Err(ClassifierError::Nn(NnError::EmptySet("training")));
    }
    config.validate()?;
    let (train, val) = stratified_split(samples, config.val_fraction, config.seed ^ 0x5eed)?;
    let spec = NetworkSpec::handover(kind.head());
    let (weights, report) = fit(&spec, config, &to_dataset(&train), &to_dataset(&val))?;
    Ok(TrainedClassifier { kind, spec, weights, fit: Some(report) })
}

/// Windows of one session, tagged with its position in the dataset.
pub(crate) fn session_windows(session: &SessionRecord, index: usize) -> Result<Vec<FeatureWindow>> {
    let mut w = build_windows(session)?;
    for x in &mut w {
        x.session = index;
    }
    Ok(w)
}

/// All labelled instances of one session for a classifier kind, before any
/// balancing: every step for timing kinds, the pre-transition windows of
/// each episode for the location kind.
pub fn session_samples(kind: ClassifierKind, session: &SessionRecord, index: usize) -> Result<Vec<Sample>> {
    let windows = session_windows(session, index)?;
    Ok(match kind.timing() {
        Some(t) => {
            let transitions: Vec<_> = session.episodes.iter().flat_map(|e| e.transitions.iter().cloned()).collect();
            to_samples(label_timing_windows(windows, &transitions, t, HORIZON_STEPS))
        }
        None => to_samples(otp_training_windows(&windows, &session.episodes, HORIZON_STEPS)),
    })
}

/// Turns a raw training pool into a training set: 1:1 down-sampling for
/// timing kinds, left oversampling and mirroring for the location kind.
pub fn prepare_training_set(kind: ClassifierKind, pool: Vec<Sample>, map: &MirrorMap, seed: u64) -> Result<(Vec<Sample>, Option<AugmentationSummary>)> {
    match kind.timing() {
        Some(t) => {
            let labeled = pool
                .into_iter()
                .map(|s| LabeledWindow { window: s.window, label: crate::features::TimingLabel { kind: t, value: s.label == 1 } })
                .collect();
            Ok((to_samples(downsample_negatives(labeled, seed)?), None))
        }
        None => {
            let labeled = pool
                .into_iter()
                .map(|s| {
                    let otp = crate::session::Otp::from_index(s.label).expect("location label");
                    LabeledWindow { window: s.window, label: crate::features::OtpLabel(otp) }
                })
                .collect();
            let (out, summary) = augment_otp(labeled, map, seed)?;
            Ok((to_samples(out), Some(summary)))
        }
    }
}

/// Pools every session, prepares the training set and trains one model.
pub fn train_on_sessions(kind: ClassifierKind, sessions: &[SessionRecord], config: &TrainConfig, map: &MirrorMap) -> Result<TrainedClassifier> {
    let mut pool = Vec::new();
    for (i, s) in sessions.iter().enumerate() {
        pool.extend(session_samples(kind, s, i)?);
    }
    let (train, _) = prepare_training_set(kind, pool, map, config.seed)?;
    train_classifier(kind, train, config)
}

/// Fails if any test window's source identity also appears in training.
pub fn check_leakage(train: &[Sample], test: &[Sample]) -> Result<()> {
    let seen: HashSet<(Arc<str>, usize, usize)> = train.iter().map(|s| s.window.identity()).collect();
    if let Some(s) = test.iter().find(|s| seen.contains(&s.window.identity())) {
        let (p, session, step) = s.window.identity();
        return Err(ClassifierError::Leakage(format!("{p}/session {session}/step {step}")));
    }
    Ok(())
}
