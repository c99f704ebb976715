//! The runtime handover state machine. Frames come in at 10 Hz; in each
//! listening state one timing classifier is polled, debounced, and on a
//! trigger the next action primitive is commanded. Nothing is classified
//! while a primitive executes.

mod log;
mod models;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use log::{episode_records, read_event_log, run_episode_log, write_event_log};
pub use models::{choose_otp, ClassifierSet, OtpPhase, PolicyModels};

use crate::features::{FeatureWindow, TimingKind, WINDOW};
use crate::session::{ArmState, BaseState, KeypointFrame, Otp, RobotStatusFrame, FEATURES_PER_FRAME, FRAME_PERIOD};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("frame at t={t} does not follow t={last}")]
    OutOfOrderFrame { t: f64, last: f64 },
    #[error("no model for {0}")]
    ModelMissing(String),
    #[error("incomplete cycle: {0}")]
    IncompleteCycle(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Classifier(#[from] crate::classifier::ClassifierError),
    #[error("event log: {0}")]
    Log(String),
}

pub type Result<T> = std::result::Result<T, PolicyError>;

named_enum! {
    pub enum Phase {
        IdleAtStorage => "idle_at_storage",
        ApproachWork => "ap1_approach_work",
        WaitAtWork => "wait_at_work",
        ReachArm => "ap2_reach_arm",
        TransferWait => "transfer_wait",
        TuckConclude => "ap3_tuck_conclude",
        ReturnAndExchange => "ap4_return_and_exchange",
    }
}

impl Phase {
    pub fn next(self) -> Phase {
        use Phase::*;
        match self {
            IdleAtStorage => ApproachWork,
            ApproachWork => WaitAtWork,
            WaitAtWork => ReachArm,
            ReachArm => TransferWait,
            TransferWait => TuckConclude,
            TuckConclude => ReturnAndExchange,
            ReturnAndExchange => IdleAtStorage,
        }
    }

    /// The transition a listening state waits for; `None` while a primitive runs.
    pub fn listens_for(self) -> Option<TimingKind> {
        match self {
            Phase::IdleAtStorage => Some(TimingKind::EpStart),
            Phase::WaitAtWork => Some(TimingKind::OtpStart),
            Phase::TransferWait => Some(TimingKind::OtpComplete),
            _ => None,
        }
    }
}

named_enum! {
    pub enum Primitive {
        MoveToWork => "move_to_work",
        StretchArm => "stretch_arm",
        TuckArmConclude => "tuck_arm_conclude",
        ReturnToStorage => "return_to_storage",
    }
}

named_enum! {
    pub enum OtpProvenance {
        InitialAtEpisodeStart => "initial",
        UpdatedAtTransferStart => "updated",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OtpChoice {
    pub otp: Otp,
    pub provenance: OtpProvenance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApCommand {
    pub primitive: Primitive,
    pub issued_at: f64,
    /// Frame index the command was issued on; the robot shows it from the next frame.
    pub step: usize,
    /// Set only for `StretchArm`.
    pub otp: Option<OtpChoice>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TriggerConfig {
    pub threshold: f64,
    pub consecutive_k: usize,
    pub refractory: f64,
}

impl Default for TriggerConfig {
    fn default() -> Self {
        Self { threshold: 0.5, consecutive_k: 3, refractory: 2.0 }
    }
}

impl TriggerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) || self.consecutive_k == 0 || !(self.refractory >= 0.0) {
            return Err(PolicyError::InvalidConfig(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Fixed execution times of the primitives, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ApDurations {
    pub move_to_work: f64,
    pub stretch_arm: f64,
    pub tuck_arm: f64,
    pub return_to_storage: f64,
    /// Timed object exchange with the experimenter after returning.
    pub exchange: f64,
}

impl Default for ApDurations {
    fn default() -> Self {
        Self { move_to_work: 4.0, stretch_arm: 3.0, tuck_arm: 3.0, return_to_storage: 4.0, exchange: 3.0 }
    }
}

pub(crate) fn steps(seconds: f64) -> usize {
    (seconds / FRAME_PERIOD).round() as usize
}

impl ApDurations {
    pub fn validate(&self) -> Result<()> {
        let all = [self.move_to_work, self.stretch_arm, self.tuck_arm, self.return_to_storage];
        if all.iter().any(|&d| steps(d) == 0) || !(self.exchange >= 0.0) {
            return Err(PolicyError::InvalidConfig(format!("{self:?}")));
        }
        Ok(())
    }

    fn frames(&self, phase: Phase) -> usize {
        match phase {
            Phase::ApproachWork => steps(self.move_to_work),
            Phase::ReachArm => steps(self.stretch_arm),
            Phase::TuckConclude => steps(self.tuck_arm),
            Phase::ReturnAndExchange => steps(self.return_to_storage) + steps(self.exchange),
            _ => 0,
        }
    }
}

/// One logged state change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyEvent {
    pub t: f64,
    pub step: usize,
    pub from: Phase,
    pub to: Phase,
    pub command: Option<Primitive>,
    pub otp: Option<Otp>,
    pub trigger_probability: Option<f64>,
}

/// Debounced trigger counter with a refractory period after each command.
#[derive(Debug, Clone)]
struct Debouncer {
    config: TriggerConfig,
    streak: usize,
    last_command: Option<f64>,
}

impl Debouncer {
    fn observe(&mut self, p: f64) -> bool {
        if p > self.config.threshold {
            self.streak += 1;
        } else {
            self.streak = 0;
        }
        self.streak >= self.config.consecutive_k
    }

    fn refractory_over(&self, t: f64) -> bool {
        self.last_command.is_none_or(|last| t - last >= self.config.refractory - 1e-9)
    }

    fn fired(&mut self, t: f64) {
        self.streak = 0;
        self.last_command = Some(t);
    }
}

#[derive(Debug, Clone)]
pub struct HandoverPolicy {
    durations: ApDurations,
    debounce: Debouncer,
    phase: Phase,
    remaining: usize,
    buffer: VecDeque<[f64; FEATURES_PER_FRAME]>,
    last_t: Option<f64>,
    processed: usize,
    initial_otp: Option<OtpChoice>,
    otp: Option<Otp>,
    events: Vec<PolicyEvent>,
    commands: Vec<ApCommand>,
}

impl HandoverPolicy {
    pub fn new(trigger: TriggerConfig, durations: ApDurations) -> Result<Self> {
        trigger.validate()?;
        durations.validate()?;
        Ok(Self {
            durations,
            debounce: Debouncer { config: trigger, streak: 0, last_command: None },
            phase: Phase::IdleAtStorage,
            remaining: 0,
            buffer: VecDeque::with_capacity(WINDOW),
            last_t: None,
            processed: 0,
            initial_otp: None,
            otp: None,
            events: Vec::new(),
            commands: Vec::new(),
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn trigger(&self) -> TriggerConfig {
        self.debounce.config
    }

    pub fn durations(&self) -> ApDurations {
        self.durations
    }

    pub fn events(&self) -> &[PolicyEvent] {
        &self.events
    }

    pub fn commands(&self) -> &[ApCommand] {
        &self.commands
    }

    /// OTP chosen at the last episode start.
    pub fn initial_otp(&self) -> Option<OtpChoice> {
        self.initial_otp
    }

    /// Robot status for the next frame, i.e. before that frame is processed.
    pub fn status(&self, t: f64) -> RobotStatusFrame {
        let (base_state, arm_state, otp_goal) = match self.phase {
            Phase::IdleAtStorage => (BaseState::AtStorage, ArmState::Tucked, None),
            Phase::ApproachWork => (BaseState::MovingToWork, ArmState::Tucked, None),
            Phase::WaitAtWork => (BaseState::AtWork, ArmState::Tucked, None),
            Phase::ReachArm => (BaseState::AtWork, ArmState::Stretching, self.otp),
            Phase::TransferWait => (BaseState::AtWork, ArmState::Extended, self.otp),
            Phase::TuckConclude => (BaseState::AtWork, ArmState::Tucking, self.otp),
            Phase::ReturnAndExchange => {
                if self.remaining > steps(self.durations.exchange) {
                    (BaseState::MovingToStorage, ArmState::Tucked, None)
                } else {
                    (BaseState::AtStorage, ArmState::Extended, None)
                }
            }
        };
        RobotStatusFrame { t, base_state, arm_state, otp_goal }
    }

    /// The window ending at the last processed frame.
    pub fn window(&self) -> Option<FeatureWindow> {
        if self.buffer.is_empty() {
            return None;
        }
        let values: Vec<f64> = self.buffer.iter().flatten().copied().collect();
        let mut w = FeatureWindow::from_values(values).expect("buffer holds a full window");
        w.t_end = self.last_t.unwrap_or(0.0);
        w.step = self.processed.saturating_sub(1);
        Some(w)
    }

    fn transition(&mut self, t: f64, command: Option<Primitive>, otp: Option<Otp>, p: Option<f64>) {
        let from = self.phase;
        self.phase = from.next();
        self.remaining = self.durations.frames(self.phase);
        self.events.push(PolicyEvent { t, step: self.processed - 1, from, to: self.phase, command, otp, trigger_probability: p });
    }

    fn issue(&mut self, t: f64, primitive: Primitive, otp: Option<OtpChoice>) -> ApCommand {
        self.debounce.fired(t);
        let cmd = ApCommand { primitive, issued_at: t, step: self.processed - 1, otp };
        self.commands.push(cmd);
        cmd
    }

    /// Consumes one frame; returns the command issued on it, if any. The
    /// resulting state is visible from the next frame's [`status`](Self::status).
    pub fn step(&mut self, frame: &KeypointFrame, models: &mut dyn PolicyModels) -> Result<Option<ApCommand>> {
        let t = frame.t;
        if let Some(last) = self.last_t {
            if !(t > last) {
                return Err(PolicyError::OutOfOrderFrame { t, last });
            }
        }
        let features = frame.features();
        if self.buffer.is_empty() {
            self.buffer.extend(std::iter::repeat_n(features, WINDOW));
        } else {
            self.buffer.pop_front();
            self.buffer.push_back(features);
        }
        self.last_t = Some(t);
        self.processed += 1;

        let out = match self.phase.listens_for() {
            Some(kind) => self.listen(kind, t, models),
            None => self.execute(t),
        };
        Ok(out)
    }

    fn listen(&mut self, kind: TimingKind, t: f64, models: &mut dyn PolicyModels) -> Option<ApCommand> {
        let window = self.window().expect("frame buffered");
        let p = models.timing_probability(kind, &window);
        if !self.debounce.observe(p) || !self.debounce.refractory_over(t) {
            return None;
        }
        let cmd = match self.phase {
            Phase::IdleAtStorage => {
                let choice = choose_otp(models, &window, OtpPhase::Initial);
                self.initial_otp = Some(choice);
                self.otp = None;
                self.transition(t, Some(Primitive::MoveToWork), Some(choice.otp), Some(p));
                self.issue(t, Primitive::MoveToWork, None)
            }
            Phase::WaitAtWork => {
                let choice = choose_otp(models, &window, OtpPhase::Update);
                self.otp = Some(choice.otp);
                self.transition(t, Some(Primitive::StretchArm), Some(choice.otp), Some(p));
                self.issue(t, Primitive::StretchArm, Some(choice))
            }
            _ => {
                self.transition(t, Some(Primitive::TuckArmConclude), None, Some(p));
                self.issue(t, Primitive::TuckArmConclude, None)
            }
        };
        Some(cmd)
    }

    fn execute(&mut self, t: f64) -> Option<ApCommand> {
        self.remaining = self.remaining.saturating_sub(1);
        if self.remaining > 0 {
            return None;
        }
        if self.phase == Phase::TuckConclude {
            if !self.debounce.refractory_over(t) {
                return None;
            }
            self.transition(t, Some(Primitive::ReturnToStorage), None, None);
            return Some(self.issue(t, Primitive::ReturnToStorage, None));
        }
        if self.phase == Phase::ReturnAndExchange {
            self.otp = None;
        }
        self.transition(t, None, None, None);
        None
    }
}
