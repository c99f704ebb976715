use super::{
    ArmState, BaseState, EpisodeRecord, HandoverType, Result, SessionError, SessionRecord, TransitionEvent,
    TransitionKind, FRAME_PERIOD,
};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Stage {
    Outside,
    Started,
    Transferring,
    Completed,
}

/// Scans adjacent status rows for the four robot edges that bound the action
/// primitives. Arm motion away from the work space (the exchange with the
/// experimenter at storage) produces no event.
pub fn extract_transitions(session: &SessionRecord) -> Result<Vec<TransitionEvent>> {
    let robot = session.robot();
    let mut events = Vec::new();
    let mut stage = Stage::Outside;
    for (i, pair) in robot.windows(2).enumerate() {
        let (prev, cur) = (pair[0], pair[1]);
        let step = i + 1;
        let kind = if prev.base_state == BaseState::AtStorage && cur.base_state == BaseState::MovingToWork {
            Some(TransitionKind::EpisodeStart)
        } else if prev.base_state == BaseState::MovingToStorage && cur.base_state == BaseState::AtStorage {
            Some(TransitionKind::EpisodeEnd)
        } else if cur.base_state == BaseState::AtWork
            && prev.arm_state == ArmState::Tucked
            && cur.arm_state == ArmState::Stretching
        {
            Some(TransitionKind::OtpStart)
        } else if cur.base_state == BaseState::AtWork
            && prev.arm_state == ArmState::Extended
            && cur.arm_state == ArmState::Tucking
        {
            Some(TransitionKind::OtpComplete)
        } else {
            None
        };
        let Some(kind) = kind else { continue };

        let next = match (stage, kind) {
            (Stage::Outside, TransitionKind::EpisodeStart) => Stage::Started,
            (Stage::Started, TransitionKind::OtpStart) => Stage::Transferring,
            (Stage::Transferring, TransitionKind::OtpComplete) => Stage::Completed,
            (Stage::Started | Stage::Completed, TransitionKind::EpisodeEnd) => Stage::Outside,
            _ => {
                return Err(SessionError::OrderViolation {
                    t: cur.t,
                    detail: format!("{kind} while episode stage is {stage:?}"),
                })
            }
        };
        stage = next;

        let otp = if kind == TransitionKind::OtpStart {
            // A reach that starts without a goal takes the first goal it acquires.
            robot[step..]
                .iter()
                .take_while(|r| matches!(r.arm_state, ArmState::Stretching | ArmState::Extended))
                .find_map(|r| r.otp_goal)
        } else {
            None
        };
        events.push(TransitionEvent { t: cur.t, step, kind, otp });
    }
    Ok(events)
}

/// Groups transitions into complete episodes (start through end) and derives
/// timing. A trailing episode without its end edge is dropped.
pub fn segment_episodes(session: &SessionRecord) -> Result<SessionRecord> {
    let events = extract_transitions(session)?;
    let robot = session.robot();
    let annotations = session.annotations();
    let mut episodes = Vec::new();
    let mut current: Vec<TransitionEvent> = Vec::new();
    for ev in events {
        if ev.kind == TransitionKind::EpisodeStart {
            current.clear();
        }
        current.push(ev);
        if ev.kind != TransitionKind::EpisodeEnd {
            continue;
        }
        let start = current[0];
        let (s, e) = (start.step, ev.step);
        let count = |state: BaseState| robot[s..e].iter().filter(|r| r.base_state == state).count() as f64;
        let note = annotations[s];
        let reached_transfer = current.iter().any(|t| t.kind == TransitionKind::OtpStart);
        episodes.push(EpisodeRecord {
            episode_id: if note.episode_id >= 0 { note.episode_id } else { episodes.len() as i64 },
            participant_id: session.participant_id.clone(),
            transitions: std::mem::take(&mut current),
            handover_type: if reached_transfer { note.handover_type } else { HandoverType::Unknown },
            quality: note.quality,
            duration: ev.t - start.t,
            pause_work: count(BaseState::AtWork) * FRAME_PERIOD,
            pause_storage: count(BaseState::AtStorage) * FRAME_PERIOD,
            start_step: s,
            end_step: e,
        });
    }
    let mut out = session.clone();
    out.episodes = episodes;
    Ok(out)
}
