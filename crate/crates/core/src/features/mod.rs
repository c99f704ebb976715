//! Sliding keypoint windows and the supervised sets built from them.

mod augment;
mod dump;
mod labels;
mod mirror;

use std::sync::Arc;

use thiserror::Error;

use crate::session::{SessionRecord, FEATURES_PER_FRAME};

pub use augment::{augment_otp, downsample_negatives, synthesize_left_gaussian, AugmentationSummary};
pub use dump::{read_training_set, write_training_set, ClassLabel};
pub use labels::{label_timing_windows, otp_training_windows, timing_labels, LabeledWindow, OtpLabel, TimingKind, TimingLabel};
pub use mirror::{mirror_to_right, MirrorMap};

/// Window length used throughout: the current step plus four history steps.
pub const WINDOW: usize = 5;
/// 5 s at 10 Hz.
pub const HORIZON_STEPS: usize = 50;
pub const WINDOW_CELLS: usize = WINDOW * FEATURES_PER_FRAME;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("session has no frames")]
    EmptySession,
    #[error("no positive instances to balance against")]
    NoPositives,
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("bad mirror map: {0}")]
    BadMirrorMap(String),
    #[error("window shape mismatch: expected {expected} cells, got {got}")]
    Shape { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, FeatureError>;

/// Where a window's values came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Observed,
    /// Sampled from per-cell Gaussians; `index` numbers the synthetic batch.
    Gaussian { index: usize },
    /// Left/right interchange of another window (which keeps its id fields).
    Mirrored,
}

/// A `WINDOW x 100` block of consecutive frames, oldest row first.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWindow {
    values: Vec<f64>,
    pub t_end: f64,
    pub step: usize,
    pub participant_id: Arc<str>,
    /// Position of the source session within a multi-session dataset.
    pub session: usize,
    pub episode_id: Option<i64>,
    pub origin: Origin,
}

impl FeatureWindow {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() != WINDOW_CELLS {
            return Err(FeatureError::Shape { expected: WINDOW_CELLS, got: values.len() });
        }
        Ok(Self { values, t_end: 0.0, step: 0, participant_id: Arc::from(""), session: 0, episode_id: None, origin: Origin::Observed })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * FEATURES_PER_FRAME..(r + 1) * FEATURES_PER_FRAME]
    }

    pub fn newest(&self) -> &[f64] {
        self.row(WINDOW - 1)
    }

    /// `(participant, session, step)` of the observed window this one derives from.
    pub fn identity(&self) -> (Arc<str>, usize, usize) {
        (self.participant_id.clone(), self.session, self.step)
    }
}

pub(crate) fn is_confidence_cell(cell: usize) -> bool {
    cell % 4 == 3
}

/// One window per timestep; the first `w - 1` steps are left-padded by
/// repeating frame 0.
pub fn build_windows(session: &SessionRecord) -> Result<Vec<FeatureWindow>> {
    build_windows_with(session, WINDOW)
}

pub fn build_windows_with(session: &SessionRecord, w: usize) -> Result<Vec<FeatureWindow>> {
    if session.is_empty() {
        return Err(FeatureError::EmptySession);
    }
    let feats: Vec<[f64; FEATURES_PER_FRAME]> = session.frames().iter().map(|f| f.features()).collect();
    let episode_at = episode_membership(session);
    let pid: Arc<str> = Arc::from(session.participant_id.as_str());
    Ok((0..feats.len())
        .map(|i| {
            let mut values = Vec::with_capacity(w * FEATURES_PER_FRAME);
            for r in 0..w {
                let src = (i + r + 1).saturating_sub(w);
                values.extend_from_slice(&feats[src]);
            }
            FeatureWindow {
                values,
                t_end: session.frames()[i].t,
                step: i,
                participant_id: pid.clone(),
                session: 0,
                episode_id: episode_at[i],
                origin: Origin::Observed,
            }
        })
        .collect())
}

/// Episode id for rows inside an episode span, `None` elsewhere.
fn episode_membership(session: &SessionRecord) -> Vec<Option<i64>> {
    let mut out = vec![None; session.len()];
    for ep in &session.episodes {
        for slot in &mut out[ep.start_step..=ep.end_step.min(session.len() - 1)] {
            *slot = Some(ep.episode_id);
        }
    }
    out
}
