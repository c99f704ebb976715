use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gesture::{BodyShape, Gesture, GestureModel};
use super::script::{ParticipantScript, ScriptGenerator};
use super::{Result, SimError};
use crate::features::{FeatureWindow, TimingKind};
use crate::policy::{ApCommand, ApDurations, HandoverPolicy, Phase, PolicyEvent, PolicyModels, TriggerConfig};
use crate::session::{segment_episodes, KeypointFrame, Otp, Quality, RobotStatusFrame, RowAnnotation, SessionRecord, FRAME_PERIOD};

/// Seconds a participant waits before signalling in a cycle the robot
/// started on its own.
const UNPLANNED_DELAY: f64 = 2.0;
/// Simulated time allowed past the last scheduled event.
const OVERRUN: f64 = 120.0;

/// One stretch of frames in which the participant performs a signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalRecord {
    pub kind: TimingKind,
    /// Planned episode the signal belongs to, if any.
    pub episode: Option<usize>,
    pub planned_t: Option<f64>,
    pub onset_t: f64,
    pub onset_step: usize,
    /// First frame without the signal.
    pub end_step: Option<usize>,
    pub otp: Otp,
    pub cue_strength: f64,
    pub injected: bool,
    /// The robot was executing a primitive at onset.
    pub robot_busy: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deadlock {
    pub t: f64,
    pub kind: TimingKind,
    pub episode: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimGroundTruth {
    pub participant_id: String,
    pub signals: Vec<SignalRecord>,
    pub deadlock: Option<Deadlock>,
    /// The run hit the time limit before every planned episode finished.
    pub overran: bool,
    pub planned_episodes: usize,
    pub n_steps: usize,
}

impl SimGroundTruth {
    /// Steps covered by genuine (not injected) signals of `kind`.
    pub fn signal_mask(&self, kind: TimingKind) -> Vec<bool> {
        let mut mask = vec![false; self.n_steps];
        for s in self.signals.iter().filter(|s| s.kind == kind && !s.injected) {
            let end = s.end_step.unwrap_or(self.n_steps);
            mask[s.onset_step..end].iter_mut().for_each(|m| *m = true);
        }
        mask
    }

    pub fn duration(&self) -> f64 {
        self.n_steps as f64 * FRAME_PERIOD
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("episode_id,kind,planned_t,onset_t,end_t,true_otp,cue_strength,deviation\n");
        for s in &self.signals {
            let opt = |v: Option<f64>| v.map(|v| format!("{v:.1}")).unwrap_or_default();
            let deviation = match (s.injected, s.robot_busy) {
                (true, true) => "injected_during_primitive",
                (true, false) => "injected",
                _ => "none",
            };
            let _ = writeln!(
                out,
                "{},{},{},{:.1},{},{},{},{deviation}",
                s.episode.map(|e| e as i64).unwrap_or(-1),
                s.kind,
                opt(s.planned_t),
                s.onset_t,
                opt(s.end_step.map(|e| e as f64 * FRAME_PERIOD)),
                s.otp,
                s.cue_strength,
            );
        }
        if let Some(d) = self.deadlock {
            let _ = writeln!(out, "{},{},,{:.1},,,,deadlock", d.episode.map(|e| e as i64).unwrap_or(-1), d.kind, d.t);
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_csv()).map_err(|e| SimError::Io(format!("{}: {e}", path.as_ref().display())))
    }
}

/// Reads the participant's current signal straight from the simulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleModels {
    pub signal: Option<(TimingKind, Otp)>,
}

impl PolicyModels for OracleModels {
    fn timing_probability(&mut self, kind: TimingKind, _: &FeatureWindow) -> f64 {
        match self.signal {
            Some((k, _)) if k == kind => 1.0,
            _ => 0.0,
        }
    }

    fn otp_probabilities(&mut self, _: &FeatureWindow) -> [f64; 3] {
        let mut p = [0.0; 3];
        p[self.signal.map(|(_, o)| o).unwrap_or(Otp::Middle).index()] = 1.0;
        p
    }
}

pub enum ModelSource<'a> {
    Oracle,
    Learned(&'a mut dyn PolicyModels),
}

#[derive(Debug, Clone)]
pub struct SimRun {
    /// Segmented into episodes.
    pub session: SessionRecord,
    pub truth: SimGroundTruth,
    pub events: Vec<PolicyEvent>,
    pub commands: Vec<ApCommand>,
}

/// The operator of a teleoperated demonstration reacts exactly one labelling
/// horizon after the participant starts signalling.
pub fn teleop_trigger() -> TriggerConfig {
    TriggerConfig { threshold: 0.5, consecutive_k: crate::features::HORIZON_STEPS, refractory: 0.0 }
}

/// A demonstration session driven by an ideal teleoperator.
pub fn generate_session(script: &ParticipantScript, gestures: &GestureModel, seed: u64) -> Result<(SessionRecord, SimGroundTruth)> {
    let policy = HandoverPolicy::new(teleop_trigger(), ApDurations::default())?;
    let run = simulate(script, gestures, policy, ModelSource::Oracle, seed)?;
    Ok((run.session, run.truth))
}

pub fn run_closed_loop(
    policy: HandoverPolicy,
    models: ModelSource<'_>,
    script: &ParticipantScript,
    gestures: &GestureModel,
    seed: u64,
) -> Result<SimRun> {
    simulate(script, gestures, policy, models, seed)
}

/// Advances participant and robot frame by frame. The participant's frame
/// `i` reacts to the robot status shown on frame `i`.
pub fn simulate(
    script: &ParticipantScript,
    gestures: &GestureModel,
    mut policy: HandoverPolicy,
    mut models: ModelSource<'_>,
    seed: u64,
) -> Result<SimRun> {
    script.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let body = BodyShape::of(&script.participant_id);
    let plans = &script.episodes;
    let mut injected: Vec<_> = script.injected.iter().collect();
    injected.sort_by(|a, b| a.t.total_cmp(&b.t));
    let limit = script.horizon() + OVERRUN;

    let mut frames: Vec<KeypointFrame> = Vec::new();
    let mut robot: Vec<RobotStatusFrame> = Vec::new();
    let mut notes: Vec<RowAnnotation> = Vec::new();
    let mut signals: Vec<SignalRecord> = Vec::new();
    let mut oracle = OracleModels::default();
    let mut started = 0usize;
    let mut current: Option<usize> = None;
    let mut in_cycle = false;
    let mut prev_phase = Phase::IdleAtStorage;
    let mut ready_since = 0.0;
    let mut active: Option<usize> = None;
    let mut injected_until: Option<f64> = None;
    let mut next_injected = 0usize;
    let mut idle_since: Option<f64> = None;
    let mut deadlock = None;
    let mut overran = false;

    for i in 0.. {
        let t = i as f64 * FRAME_PERIOD;
        let status = policy.status(t);
        let phase = policy.phase();
        if phase != prev_phase {
            ready_since = t;
            if phase == Phase::ApproachWork {
                in_cycle = true;
                current = (started < plans.len()).then_some(started);
                started += usize::from(current.is_some());
            } else if phase == Phase::IdleAtStorage {
                in_cycle = false;
                current = None;
            }
        }
        prev_phase = phase;
        let expected = phase.listens_for();

        if let Some(a) = active {
            let s = &mut signals[a];
            let over = match injected_until {
                Some(until) => t >= until - 1e-9,
                None => expected != Some(s.kind),
            };
            if over {
                s.end_step = Some(i);
                active = None;
                injected_until = None;
            } else if !s.injected && t - s.onset_t > script.timeout + 1e-9 {
                deadlock = Some(Deadlock { t, kind: s.kind, episode: s.episode });
                break;
            }
        }

        if active.is_none() && next_injected < injected.len() && t >= injected[next_injected].t - 1e-9 {
            let j = injected[next_injected];
            next_injected += 1;
            active = Some(signals.len());
            injected_until = Some(t + j.duration);
            signals.push(SignalRecord {
                kind: j.kind,
                episode: current,
                planned_t: Some(j.t),
                onset_t: t,
                onset_step: i,
                end_step: None,
                otp: j.otp,
                cue_strength: 1.0,
                injected: true,
                robot_busy: expected.is_none(),
            });
        }

        if let (None, Some(kind)) = (active, expected) {
            let (episode, intent) = match (kind, current) {
                (TimingKind::EpStart, _) => {
                    let e = (started < plans.len()).then_some(started);
                    (e, e.map(|e| plans[e].ep_start))
                }
                (_, Some(e)) => (Some(e), Some(plans[e].intent(kind))),
                (_, None) => (None, Some(ready_since + UNPLANNED_DELAY)),
            };
            if let Some(intent) = intent.filter(|&it| t >= it - 1e-9) {
                let (otp, cue_strength) = episode.map(|e| (plans[e].otp, plans[e].cue_strength)).unwrap_or((Otp::Middle, 1.0));
                active = Some(signals.len());
                signals.push(SignalRecord {
                    kind,
                    episode,
                    planned_t: episode.map(|_| intent),
                    onset_t: t,
                    onset_step: i,
                    end_step: None,
                    otp,
                    cue_strength,
                    injected: false,
                    robot_busy: false,
                });
            }
        }

        let gesture = match active.map(|a| &signals[a]) {
            Some(s) => Gesture::Signal { kind: s.kind, otp: s.otp, cue_strength: s.cue_strength },
            None if phase == Phase::TransferWait => Gesture::Transfer,
            None => Gesture::Activity(script.activity_at(t)),
        };
        let pose = gestures.pose(gesture, t, script.handedness, body.phase);
        let frame = gestures.render(&pose, t, &body, script.noise_std, &mut rng);
        oracle.signal = active.map(|a| (signals[a].kind, signals[a].otp));
        match &mut models {
            ModelSource::Oracle => policy.step(&frame, &mut oracle)?,
            ModelSource::Learned(m) => policy.step(&frame, *m)?,
        };
        let note = match current.filter(|_| in_cycle) {
            Some(e) => RowAnnotation { episode_id: e as i64, handover_type: plans[e].handover_type, quality: Quality::Good },
            None => RowAnnotation::default(),
        };
        frames.push(frame);
        robot.push(status);
        notes.push(note);

        let finished = started == plans.len()
            && phase == Phase::IdleAtStorage
            && active.is_none()
            && next_injected == injected.len()
            && t >= script.segments_end() - 1e-9;
        if finished {
            let since = *idle_since.get_or_insert(t);
            if t - since >= script.tail - 1e-9 {
                break;
            }
        } else {
            idle_since = None;
        }
        if t >= limit {
            overran = true;
            break;
        }
    }

    let n_steps = frames.len();
    let session = segment_episodes(&SessionRecord::new(script.participant_id.clone(), frames, robot, notes)?)?;
    Ok(SimRun {
        session,
        truth: SimGroundTruth {
            participant_id: script.participant_id.clone(),
            signals,
            deadlock,
            overran,
            planned_episodes: plans.len(),
            n_steps,
        },
        events: policy.events().to_vec(),
        commands: policy.commands().to_vec(),
    })
}

/// A simulated study: script and session for each of `sessions` runs,
/// spread round-robin over `participants` participants.
pub fn simulate_study(
    generator: &ScriptGenerator,
    gestures: &GestureModel,
    sessions: usize,
    participants: usize,
    seed: u64,
) -> Result<Vec<(ParticipantScript, SessionRecord, SimGroundTruth)>> {
    let participants = participants.max(1);
    (0..sessions)
        .map(|i| {
            let pid = format!("p{:02}", i % participants + 1);
            let s = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
            let script = generator.generate(&pid, s);
            let (session, truth) = generate_session(&script, gestures, s ^ 0x5151)?;
            Ok((script, session, truth))
        })
        .collect()
}
