//! Session logs: keypoint frames, discrete robot status, handover episodes.
//!
//! A [`SessionRecord`] is the 10 Hz log of one participant session. Frames and
//! robot status rows are index-aligned; the step index of a row is its
//! position in those vectors.

mod coverage;
mod io;
mod transitions;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use coverage::{validate_ap_model, validate_ap_model_with, ApCoverageReport, PauseRule};
pub use io::{load_session, load_session_canonical, save_session, ColumnMap};
pub use transitions::{extract_transitions, segment_episodes};

pub const NUM_KEYPOINTS: usize = 25;
pub const CHANNELS_PER_KEYPOINT: usize = 4;
pub const FEATURES_PER_FRAME: usize = NUM_KEYPOINTS * CHANNELS_PER_KEYPOINT;
/// Seconds between consecutive frames.
pub const FRAME_PERIOD: f64 = 0.1;
pub const TIMEBASE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column for role `{0}`")]
    MissingColumn(String),
    #[error("timebase error at row {row}: {detail}")]
    TimebaseError { row: usize, detail: String },
    #[error("schema error: {0}")]
    SchemaError(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}`")]
    BadCell { row: usize, column: String, value: String },
    #[error("transition order violation at t={t:.1}: {detail}")]
    OrderViolation { t: f64, detail: String },
    #[error("column map: {0}")]
    ColumnMap(String),
}

pub type Result<T> = std::result::Result<T, SessionError>;

/// One keypoint: normalised coordinates and detection confidence.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeypointFrame {
    pub t: f64,
    pub kp: [Keypoint; NUM_KEYPOINTS],
}

impl KeypointFrame {
    /// Flattens to `kp00_x, kp00_y, kp00_z, kp00_c, kp01_x, ...`.
    pub fn features(&self) -> [f64; FEATURES_PER_FRAME] {
        let mut out = [0.0; FEATURES_PER_FRAME];
        for (i, k) in self.kp.iter().enumerate() {
            out[4 * i..4 * i + 4].copy_from_slice(&[k.x, k.y, k.z, k.c]);
        }
        out
    }

    pub fn from_features(t: f64, values: &[f64]) -> Result<Self> {
        if values.len() != FEATURES_PER_FRAME {
            return Err(SessionError::SchemaError(format!(
                "expected {FEATURES_PER_FRAME} keypoint values, got {}",
                values.len()
            )));
        }
        let mut kp = [Keypoint::default(); NUM_KEYPOINTS];
        for (i, k) in kp.iter_mut().enumerate() {
            let v = &values[4 * i..4 * i + 4];
            *k = Keypoint { x: v[0], y: v[1], z: v[2], c: v[3] };
        }
        Ok(Self { t, kp })
    }

    fn check(&self) -> Result<()> {
        for (i, k) in self.kp.iter().enumerate() {
            if ![k.x, k.y, k.z, k.c].iter().all(|v| v.is_finite()) {
                return Err(SessionError::SchemaError(format!(
                    "non-finite value in keypoint {i} at t={}",
                    self.t
                )));
            }
            if !(0.0..=1.0).contains(&k.c) {
                return Err(SessionError::SchemaError(format!(
                    "confidence {} of keypoint {i} at t={} outside [0,1]",
                    k.c, self.t
                )));
            }
        }
        Ok(())
    }
}

named_enum! {
    pub enum BaseState {
        AtStorage => "at_storage",
        MovingToWork => "moving_to_work",
        AtWork => "at_work",
        MovingToStorage => "moving_to_storage",
    }
}

named_enum! {
    pub enum ArmState {
        Tucked => "tucked",
        Stretching => "stretching",
        Extended => "extended",
        Tucking => "tucking",
    }
}

named_enum! {
    /// Object transfer position, from the robot's perspective.
    pub enum Otp {
        Left => "left",
        Middle => "middle",
        Right => "right",
    }
}

impl Otp {
    /// Class index used by the 3-way head; also the tie-break order.
    pub fn index(self) -> usize {
        match self {
            Otp::Left => 0,
            Otp::Middle => 1,
            Otp::Right => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Otp> {
        Otp::ALL.get(i).copied()
    }
}

named_enum! {
    pub enum HandoverType {
        R2H => "r2h",
        H2R => "h2r",
        Bidirectional => "bidirectional",
        Unknown => "unknown",
    }
}

named_enum! {
    pub enum Quality {
        Good => "good",
        Bad => "bad",
        Neutral => "neutral",
        Unknown => "unknown",
    }
}

named_enum! {
    pub enum TransitionKind {
        EpisodeStart => "episode_start",
        OtpStart => "otp_start",
        OtpComplete => "otp_complete",
        EpisodeEnd => "episode_end",
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotStatusFrame {
    pub t: f64,
    pub base_state: BaseState,
    pub arm_state: ArmState,
    pub otp_goal: Option<Otp>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionEvent {
    pub t: f64,
    /// Index of the first row showing the new status.
    pub step: usize,
    pub kind: TransitionKind,
    pub otp: Option<Otp>,
}

/// Observer annotation attached to one log row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowAnnotation {
    /// -1 outside episodes.
    pub episode_id: i64,
    pub handover_type: HandoverType,
    pub quality: Quality,
}

impl Default for RowAnnotation {
    fn default() -> Self {
        Self { episode_id: -1, handover_type: HandoverType::Unknown, quality: Quality::Unknown }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode_id: i64,
    pub participant_id: String,
    pub transitions: Vec<TransitionEvent>,
    pub handover_type: HandoverType,
    pub quality: Quality,
    pub duration: f64,
    pub pause_work: f64,
    pub pause_storage: f64,
    pub start_step: usize,
    pub end_step: usize,
}

impl EpisodeRecord {
    /// Transfer position used at the object-transfer start, if the robot reached one.
    pub fn otp(&self) -> Option<Otp> {
        self.transitions
            .iter()
            .find(|e| e.kind == TransitionKind::OtpStart)
            .and_then(|e| e.otp)
    }

    pub fn transition(&self, kind: TransitionKind) -> Option<&TransitionEvent> {
        self.transitions.iter().find(|e| e.kind == kind)
    }

    pub fn start_t(&self) -> f64 {
        self.transitions.first().map(|e| e.t).unwrap_or(0.0)
    }

    pub fn end_t(&self) -> f64 {
        self.transitions.last().map(|e| e.t).unwrap_or(0.0)
    }
}

/// A validated, immutable session log.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionRecord {
    pub participant_id: String,
    frames: Vec<KeypointFrame>,
    robot: Vec<RobotStatusFrame>,
    annotations: Vec<RowAnnotation>,
    pub episodes: Vec<EpisodeRecord>,
}

impl SessionRecord {
    /// Validates and builds a session without episodes; see [`segment_episodes`].
    pub fn new(
        participant_id: impl Into<String>,
        frames: Vec<KeypointFrame>,
        robot: Vec<RobotStatusFrame>,
        annotations: Vec<RowAnnotation>,
    ) -> Result<Self> {
        if frames.len() != robot.len() || frames.len() != annotations.len() {
            return Err(SessionError::SchemaError(format!(
                "{} frames, {} robot rows, {} annotation rows",
                frames.len(),
                robot.len(),
                annotations.len()
            )));
        }
        for (i, (f, r)) in frames.iter().zip(&robot).enumerate() {
            f.check()?;
            if !f.t.is_finite() || f.t < 0.0 {
                return Err(SessionError::TimebaseError { row: i, detail: format!("invalid t {}", f.t) });
            }
            if (f.t - r.t).abs() > TIMEBASE_TOLERANCE {
                return Err(SessionError::TimebaseError {
                    row: i,
                    detail: format!("robot t {} not aligned with frame t {}", r.t, f.t),
                });
            }
            if r.otp_goal.is_some() && r.arm_state == ArmState::Tucked {
                return Err(SessionError::SchemaError(format!("row {i}: OTP goal set while arm tucked")));
            }
            if i > 0 {
                let dt = f.t - frames[i - 1].t;
                if (dt - FRAME_PERIOD).abs() > TIMEBASE_TOLERANCE {
                    return Err(SessionError::TimebaseError {
                        row: i,
                        detail: format!("step {dt:.6} s from t={} to t={}", frames[i - 1].t, f.t),
                    });
                }
            }
        }
        Ok(Self { participant_id: participant_id.into(), frames, robot, annotations, episodes: Vec::new() })
    }

    pub fn frames(&self) -> &[KeypointFrame] {
        &self.frames
    }

    pub fn robot(&self) -> &[RobotStatusFrame] {
        &self.robot
    }

    pub fn annotations(&self) -> &[RowAnnotation] {
        &self.annotations
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Step index of the episode each row belongs to, for fold assignment.
    ///
    /// Rows leading up to an episode (after the previous episode ended) belong
    /// to it, so the windows preceding an episode start travel with that
    /// episode. Rows after the last episode belong to the last one.
    pub fn episode_of_step(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.len()];
        if self.episodes.is_empty() {
            return out;
        }
        let mut lo = 0;
        for (e, ep) in self.episodes.iter().enumerate() {
            let hi = if e + 1 == self.episodes.len() { self.len() } else { ep.end_step + 1 };
            for slot in &mut out[lo..hi.min(self.len())] {
                *slot = Some(e);
            }
            lo = hi;
        }
        out
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    pub fn flat_frame(t: f64, v: f64) -> KeypointFrame {
        KeypointFrame { t, kp: [Keypoint { x: v, y: v, z: v, c: 0.5 }; NUM_KEYPOINTS] }
    }

    /// Session with a scripted status track; `status[i]` is row i.
    pub fn scripted(status: &[(BaseState, ArmState, Option<Otp>)]) -> SessionRecord {
        let frames = (0..status.len()).map(|i| flat_frame(i as f64 * FRAME_PERIOD, 0.1)).collect();
        let robot = status
            .iter()
            .enumerate()
            .map(|(i, &(b, a, o))| RobotStatusFrame { t: i as f64 * FRAME_PERIOD, base_state: b, arm_state: a, otp_goal: o })
            .collect();
        SessionRecord::new("p", frames, robot, vec![RowAnnotation::default(); status.len()]).unwrap()
    }

    /// One episode: leave storage at `start`, reach work 4 s later, stretch at `otp`,
    /// tuck at `complete`, return 4 s after tuck (3 s) finishes. Times in steps.
    pub fn episode_track(
        len: usize,
        episodes: &[(usize, usize, usize, Otp)],
    ) -> Vec<(BaseState, ArmState, Option<Otp>)> {
        use ArmState::*;
        use BaseState::*;
        let mut track = vec![(AtStorage, Tucked, None); len];
        for &(start, otp_step, complete, otp) in episodes {
            for (i, slot) in track.iter_mut().enumerate() {
                if i >= start && i < start + 40 {
                    *slot = (MovingToWork, Tucked, None);
                } else if i >= start + 40 && i < otp_step {
                    *slot = (AtWork, Tucked, None);
                } else if i >= otp_step && i < otp_step + 30 {
                    *slot = (AtWork, Stretching, Some(otp));
                } else if i >= otp_step + 30 && i < complete {
                    *slot = (AtWork, Extended, Some(otp));
                } else if i >= complete && i < complete + 30 {
                    *slot = (AtWork, Tucking, Some(otp));
                } else if i >= complete + 30 && i < complete + 70 {
                    *slot = (MovingToStorage, Tucked, None);
                }
            }
        }
        track
    }
}
