use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::{Result, SimError};
use crate::features::TimingKind;
use crate::session::{HandoverType, Otp};

named_enum! {
    pub enum Stage {
        Preparation => "preparation",
        Assembly => "assembly",
        Painting => "painting",
    }
}

named_enum! {
    /// Background crafting motion; `ReachShelf` periodically raises an arm
    /// much like a start signal.
    pub enum Activity {
        Idle => "idle",
        Sorting => "sorting",
        Assembling => "assembling",
        Painting => "painting",
        ReachShelf => "reach_shelf",
    }
}

named_enum! {
    pub enum Handedness {
        Right => "right",
        Left => "left",
    }
}

impl Stage {
    pub fn default_activity(self) -> Activity {
        match self {
            Stage::Preparation => Activity::Sorting,
            Stage::Assembly => Activity::Assembling,
            Stage::Painting => Activity::Painting,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub stage: Stage,
    #[serde(default)]
    pub activity: Option<Activity>,
    pub duration: f64,
}

impl Segment {
    pub fn activity(&self) -> Activity {
        self.activity.unwrap_or(self.stage.default_activity())
    }
}

/// One planned handover. Intent times are absolute; the participant signals
/// at an intent time or as soon as the robot is ready, whichever is later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodePlan {
    pub ep_start: f64,
    pub otp_start: f64,
    pub otp_complete: f64,
    pub otp: Otp,
    /// 0 makes the signals look like a middle request whatever the intent.
    #[serde(default = "one")]
    pub cue_strength: f64,
    #[serde(default = "r2h")]
    pub handover_type: HandoverType,
}

fn one() -> f64 {
    1.0
}

fn r2h() -> HandoverType {
    HandoverType::R2H
}

impl EpisodePlan {
    pub fn intent(&self, kind: TimingKind) -> f64 {
        match kind {
            TimingKind::EpStart => self.ep_start,
            TimingKind::OtpStart => self.otp_start,
            TimingKind::OtpComplete => self.otp_complete,
        }
    }
}

/// A signal performed at a fixed time regardless of the robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectedSignal {
    pub t: f64,
    pub kind: TimingKind,
    pub duration: f64,
    #[serde(default = "middle")]
    pub otp: Otp,
}

fn middle() -> Otp {
    Otp::Middle
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantScript {
    pub participant_id: String,
    #[serde(default = "right_handed")]
    pub handedness: Handedness,
    #[serde(default)]
    pub segments: Vec<Segment>,
    #[serde(default)]
    pub episodes: Vec<EpisodePlan>,
    #[serde(default)]
    pub injected: Vec<InjectedSignal>,
    /// Seconds a participant keeps signalling before giving up.
    #[serde(default = "timeout")]
    pub timeout: f64,
    /// Idle seconds recorded after the last episode.
    #[serde(default = "tail")]
    pub tail: f64,
    #[serde(default = "noise")]
    pub noise_std: f64,
}

fn right_handed() -> Handedness {
    Handedness::Right
}

fn timeout() -> f64 {
    20.0
}

fn tail() -> f64 {
    5.0
}

fn noise() -> f64 {
    0.008
}

impl ParticipantScript {
    pub fn empty(participant_id: impl Into<String>) -> Self {
        Self {
            participant_id: participant_id.into(),
            handedness: Handedness::Right,
            segments: Vec::new(),
            episodes: Vec::new(),
            injected: Vec::new(),
            timeout: timeout(),
            tail: tail(),
            noise_std: noise(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Self = toml::from_str(text).map_err(|e| SimError::Script(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| SimError::Script(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("script serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let mut last = f64::NEG_INFINITY;
        for (i, e) in self.episodes.iter().enumerate() {
            for t in [e.ep_start, e.otp_start, e.otp_complete] {
                if !t.is_finite() || t <= last {
                    return Err(SimError::ScheduleConflict(format!("episode {i}: intent at {t} does not follow {last}")));
                }
                last = t;
            }
            if !(0.0..=1.0).contains(&e.cue_strength) {
                return Err(SimError::Script(format!("episode {i}: cue strength {} outside [0,1]", e.cue_strength)));
            }
        }
        let bad = |v: f64| !v.is_finite() || v < 0.0;
        if self.segments.iter().any(|s| bad(s.duration)) || self.injected.iter().any(|s| bad(s.t) || !(s.duration > 0.0)) {
            return Err(SimError::Script("negative or non-finite duration".into()));
        }
        if !(self.timeout > 0.0) || bad(self.tail) || bad(self.noise_std) {
            return Err(SimError::Script("timeout, tail and noise must be non-negative".into()));
        }
        Ok(())
    }

    pub fn segments_end(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn activity_at(&self, t: f64) -> Activity {
        let mut end = 0.0;
        for s in &self.segments {
            end += s.duration;
            if t < end {
                return s.activity();
            }
        }
        self.segments.last().map(Segment::activity).unwrap_or(Activity::Idle)
    }

    /// Latest scheduled time in the script.
    pub fn horizon(&self) -> f64 {
        let ep = self.episodes.last().map(|e| e.otp_complete).unwrap_or(0.0);
        let inj = self.injected.iter().map(|s| s.t + s.duration).fold(0.0, f64::max);
        ep.max(inj).max(self.segments_end())
    }
}

/// Parameters for drawing random scripts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScriptGenerator {
    pub episodes: usize,
    /// Relative weights of Left, Middle, Right intents.
    pub otp_weights: [f64; 3],
    /// Fraction of leading episodes with clearly cued intents; later
    /// episodes show no cue and want an arbitrary position.
    pub drift_after: Option<f64>,
    pub adversarial: bool,
    pub noise_std: f64,
}

impl Default for ScriptGenerator {
    fn default() -> Self {
        Self { episodes: 4, otp_weights: [0.4, 0.6, 0.0], drift_after: None, adversarial: false, noise_std: noise() }
    }
}

fn weighted(rng: &mut ChaCha8Rng, weights: &[f64; 3]) -> Otp {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return Otp::from_index(i).expect("three positions");
        }
        u -= w;
    }
    Otp::Middle
}

impl ScriptGenerator {
    /// Spacing leaves room for a slow (teleoperated) robot between intents.
    pub fn generate(&self, participant_id: &str, seed: u64) -> ParticipantScript {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = rng.random_range(5.0..10.0);
        let mut episodes = Vec::with_capacity(self.episodes);
        let clear = self.drift_after.map(|f| (f * self.episodes as f64).round() as usize);
        let round = |v: f64| (v * 10.0).round() / 10.0;
        for i in 0..self.episodes {
            let ep_start = round(t);
            let otp_start = round(ep_start + rng.random_range(11.0..16.0));
            let otp_complete = round(otp_start + rng.random_range(10.0..14.0));
            let (otp, cue_strength) = match clear {
                Some(n) if i < n => (weighted(&mut rng, &self.otp_weights), 1.0),
                Some(_) => (weighted(&mut rng, &[1.0, 1.0, 1.0]), 0.0),
                None => (weighted(&mut rng, &self.otp_weights), 1.0),
            };
            let handover_type = if rng.random_bool(0.8) { HandoverType::R2H } else { HandoverType::Bidirectional };
            episodes.push(EpisodePlan { ep_start, otp_start, otp_complete, otp, cue_strength, handover_type });
            t = otp_complete + rng.random_range(17.0..25.0);
        }
        let total = t;
        let mut segments = Vec::new();
        for (i, stage) in Stage::ALL.iter().enumerate() {
            let activity = if self.adversarial && i == 0 { Some(Activity::ReachShelf) } else { None };
            segments.push(Segment { stage: *stage, activity, duration: round(total / 3.0) });
        }
        ParticipantScript {
            participant_id: participant_id.to_string(),
            handedness: if rng.random_bool(0.85) { Handedness::Right } else { Handedness::Left },
            segments,
            episodes,
            injected: Vec::new(),
            timeout: timeout(),
            tail: tail(),
            noise_std: self.noise_std,
        }
    }
}
