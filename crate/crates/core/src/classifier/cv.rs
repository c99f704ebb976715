use std::fmt::Write as _;

use serde::Serialize;

use super::{
    check_leakage, make_folds, prepare_training_set, session_samples, train_classifier, ClassifierError, ClassifierKind,
    FoldMode, FoldSpec, Result, Sample, TrainedClassifier, FOLDS,
};
use crate::features::{AugmentationSummary, MirrorMap};
use crate::nn::TrainConfig;
use crate::session::SessionRecord;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvReport {
    pub kind: ClassifierKind,
    pub mode: FoldMode,
    pub per_fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    pub train_sizes: Vec<usize>,
    pub test_sizes: Vec<usize>,
}

impl CvReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,mode,fold,accuracy\n");
        for (i, a) in self.per_fold_accuracy.iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{a}", self.kind, self.mode, i + 1);
        }
        let _ = writeln!(out, "{},{},mean,{}", self.kind, self.mode, self.mean_accuracy);
        out
    }
}

/// Everything a cross-validation run produced, in fold order.
#[derive(Debug, Clone)]
pub struct CvRun {
    pub report: CvReport,
    pub folds: FoldSpec,
    pub models: Vec<TrainedClassifier>,
    pub augmentation: Vec<Option<AugmentationSummary>>,
}

pub fn cross_validate(kind: ClassifierKind, sessions: &[SessionRecord], mode: FoldMode, config: &TrainConfig) -> Result<CvRun> {
    cross_validate_with(kind, sessions, mode, config, &MirrorMap::default())
}

/// Splits every session's samples into the training pool and the test fold.
fn partition(all: &[Vec<Sample>], step_folds: &[Vec<Option<usize>>], fold: usize) -> (Vec<Sample>, Vec<Sample>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (samples, folds) in all.iter().zip(step_folds) {
        for s in samples {
            match folds[s.window.step] {
                Some(f) if f == fold => test.push(s.clone()),
                Some(_) => train.push(s.clone()),
                None => {}
            }
        }
    }
    (train, test)
}

/// K-fold cross-validation. Balancing, augmentation and the validation split
/// only ever see the training folds; the test fold keeps its natural class mix.
pub fn cross_validate_with(
    kind: ClassifierKind,
    sessions: &[SessionRecord],
    mode: FoldMode,
    config: &TrainConfig,
    map: &MirrorMap,
) -> Result<CvRun> {
    config.validate()?;
    let folds = make_folds(sessions, mode, config.seed)?;
    let step_folds = folds.step_folds(sessions);
    let all: Vec<Vec<Sample>> =
        sessions.iter().enumerate().map(|(i, s)| session_samples(kind, s, i)).collect::<Result<_>>()?;

    let mut per_fold_accuracy = Vec::with_capacity(FOLDS);
    let mut train_sizes = Vec::with_capacity(FOLDS);
    let mut test_sizes = Vec::with_capacity(FOLDS);
    let mut models = Vec::with_capacity(FOLDS);
    let mut augmentation = Vec::with_capacity(FOLDS);
    for fold in 0..FOLDS {
        let (pool, test) = partition(&all, &step_folds, fold);
        if test.is_empty() || pool.is_empty() {
            return Err(ClassifierError::InsufficientData(format!("fold {} has {} test and {} training samples", fold + 1, test.len(), pool.len())));
        }
        let seed = config.seed.wrapping_add(fold as u64);
        let (train, summary) = prepare_training_set(kind, pool, map, seed)?;
        check_leakage(&train, &test)?;
        train_sizes.push(train.len());
        test_sizes.push(test.len());
        let model = train_classifier(kind, train, &TrainConfig { seed, ..*config })?;
        per_fold_accuracy.push(model.accuracy(&test));
        models.push(model);
        augmentation.push(summary);
    }
    let mean_accuracy = per_fold_accuracy.iter().sum::<f64>() / FOLDS as f64;
    Ok(CvRun {
        report: CvReport { kind, mode, per_fold_accuracy, mean_accuracy, train_sizes, test_sizes },
        folds,
        models,
        augmentation,
    })
}

/// Location accuracy by temporal position: the fold-n model scored on the
/// n-th 20% of each participant's episodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositionReport {
    pub accuracies: Vec<f64>,
    pub mean: f64,
}

impl PositionReport {
    pub fn to_text(&self) -> String {
        let mut out = String::from("Location accuracy by episode position (%)\n ");
        for i in 1..=self.accuracies.len() {
            let _ = write!(out, "{:>8}", format!("{}", i));
        }
        let _ = writeln!(out, "{:>8}", "mean");
        out.push(' ');
        for a in &self.accuracies {
            let _ = write!(out, "{:>8.1}", a * 100.0);
        }
        let _ = writeln!(out, "{:>8.1}", self.mean * 100.0);
        out
    }
}

pub fn evaluate_by_episode_position(models: &[TrainedClassifier], sessions: &[SessionRecord]) -> Result<PositionReport> {
    if models.len() != FOLDS || models.iter().any(|m| m.kind != ClassifierKind::OtpType) {
        return Err(ClassifierError::InsufficientData(format!("need {FOLDS} location models, one per fold")));
    }
    let folds = make_folds(sessions, FoldMode::ByEpisode, 0)?;
    let step_folds = folds.step_folds(sessions);
    let all: Vec<Vec<Sample>> = sessions
        .iter()
        .enumerate()
        .map(|(i, s)| session_samples(ClassifierKind::OtpType, s, i))
        .collect::<Result<_>>()?;
    let accuracies: Vec<f64> = (0..FOLDS).map(|fold| models[fold].accuracy(&partition(&all, &step_folds, fold).1)).collect();
    let mean = accuracies.iter().sum::<f64>() / FOLDS as f64;
    Ok(PositionReport { accuracies, mean })
}

/// Mean accuracies as a kinds-by-modes text table.
pub fn format_cv_table(reports: &[CvReport]) -> String {
    let mut out = format!("{:<14}{:>16}{:>16}\n", "classifier", FoldMode::ByParticipant, FoldMode::ByEpisode);
    for kind in ClassifierKind::ALL {
        let cell = |mode| {
            reports
                .iter()
                .find(|r| r.kind == *kind && r.mode == mode)
                .map(|r| format!("{:.1}", r.mean_accuracy * 100.0))
                .unwrap_or_else(|| "-".into())
        };
        if reports.iter().any(|r| r.kind == *kind) {
            let _ = writeln!(out, "{:<14}{:>16}{:>16}", kind.as_str(), cell(FoldMode::ByParticipant), cell(FoldMode::ByEpisode));
        }
    }
    out
}
