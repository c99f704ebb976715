use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{steps, ApDurations, Phase, PolicyError, PolicyEvent, Primitive, Result};
use crate::session::{EpisodeRecord, HandoverType, Otp, Quality, TransitionEvent, TransitionKind, FRAME_PERIOD};

#[derive(Serialize, Deserialize)]
struct Row {
    t: f64,
    state_from: Phase,
    state_to: Phase,
    command: Option<Primitive>,
    otp: Option<Otp>,
    trigger_probability: Option<f64>,
    step: usize,
}

pub fn write_event_log<W: Write>(w: W, events: &[PolicyEvent]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for e in events {
        out.serialize(Row {
            t: e.t,
            state_from: e.from,
            state_to: e.to,
            command: e.command,
            otp: e.otp,
            trigger_probability: e.trigger_probability,
            step: e.step,
        })
        .map_err(|e| PolicyError::Log(e.to_string()))?;
    }
    out.flush().map_err(|e| PolicyError::Log(e.to_string()))
}

pub fn read_event_log<R: Read>(r: R) -> Result<Vec<PolicyEvent>> {
    csv::Reader::from_reader(r)
        .deserialize::<Row>()
        .map(|row| {
            let row = row.map_err(|e| PolicyError::Log(e.to_string()))?;
            Ok(PolicyEvent {
                t: row.t,
                step: row.step,
                from: row.state_from,
                to: row.state_to,
                command: row.command,
                otp: row.otp,
                trigger_probability: row.trigger_probability,
            })
        })
        .collect()
}

const CYCLE: [Primitive; 4] = [Primitive::MoveToWork, Primitive::StretchArm, Primitive::TuckArmConclude, Primitive::ReturnToStorage];

/// Builds the episode record of one complete cycle of commands, with
/// transition times at the first frame showing each new robot status.
pub fn run_episode_log(events: &[PolicyEvent], durations: &ApDurations, participant_id: &str, episode_id: i64) -> Result<EpisodeRecord> {
    let commands: Vec<&PolicyEvent> = events.iter().filter(|e| e.command.is_some()).collect();
    let found: Vec<Primitive> = commands.iter().filter_map(|e| e.command).collect();
    if found != CYCLE {
        return Err(PolicyError::IncompleteCycle(format!("commands {found:?}")));
    }
    let edge = |e: &PolicyEvent| (e.t + FRAME_PERIOD, e.step + 1);
    let (start_t, start_step) = edge(commands[0]);
    let (otp_t, otp_step) = edge(commands[1]);
    let (done_t, done_step) = edge(commands[2]);
    let (ret_t, ret_step) = edge(commands[3]);
    let back = steps(durations.return_to_storage);
    let end_t = ret_t + back as f64 * FRAME_PERIOD;
    let end_step = ret_step + back;
    let at_work = ret_step - (start_step + steps(durations.move_to_work));
    let ev = |t, step, kind, otp| TransitionEvent { t, step, kind, otp };
    Ok(EpisodeRecord {
        episode_id,
        participant_id: participant_id.to_string(),
        transitions: vec![
            ev(start_t, start_step, TransitionKind::EpisodeStart, None),
            ev(otp_t, otp_step, TransitionKind::OtpStart, commands[1].otp),
            ev(done_t, done_step, TransitionKind::OtpComplete, None),
            ev(end_t, end_step, TransitionKind::EpisodeEnd, None),
        ],
        handover_type: HandoverType::Unknown,
        quality: Quality::Unknown,
        duration: end_t - start_t,
        pause_work: at_work as f64 * FRAME_PERIOD,
        pause_storage: 0.0,
        start_step,
        end_step,
    })
}

/// One record per complete cycle in the log; a trailing partial cycle is ignored.
pub fn episode_records(events: &[PolicyEvent], durations: &ApDurations, participant_id: &str) -> Vec<EpisodeRecord> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, e) in events.iter().enumerate() {
        match e.command {
            Some(Primitive::MoveToWork) => start = Some(i),
            Some(Primitive::ReturnToStorage) => {
                if let Some(s) = start.take() {
                    if let Ok(r) = run_episode_log(&events[s..=i], durations, participant_id, out.len() as i64) {
                        out.push(r);
                    }
                }
            }
            _ => {}
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cmd(t: f64, command: Primitive, otp: Option<Otp>) -> PolicyEvent {
        PolicyEvent { t, step: (t * 10.0).round() as usize, from: Phase::IdleAtStorage, to: Phase::ApproachWork, command: Some(command), otp, trigger_probability: Some(0.9) }
    }

    fn cycle(t0: f64) -> Vec<PolicyEvent> {
        vec![
            cmd(t0, Primitive::MoveToWork, Some(Otp::Middle)),
            cmd(t0 + 5.0, Primitive::StretchArm, Some(Otp::Left)),
            cmd(t0 + 9.0, Primitive::TuckArmConclude, None),
            cmd(t0 + 12.0, Primitive::ReturnToStorage, None),
        ]
    }

    #[test]
    fn complete_cycle() {
        let r = run_episode_log(&cycle(1.0), &ApDurations::default(), "p", 0).unwrap();
        assert!((r.duration - (r.end_t() - r.start_t())).abs() < 1e-12);
        assert!((r.duration - 16.0).abs() < 1e-9);
        assert_eq!(r.otp(), Some(Otp::Left));
        assert_eq!(r.end_step - r.start_step, 160);
        // At work from arrival at 5.1 through the last tucking frame at 13.0.
        assert!((r.pause_work - 8.0).abs() < 1e-9);
    }

    #[test]
    fn aborted_cycle() {
        let mut c = cycle(0.0);
        c.truncate(2);
        assert!(matches!(run_episode_log(&c, &ApDurations::default(), "p", 0), Err(PolicyError::IncompleteCycle(_))));
    }

    #[test]
    fn csv_round_trip_and_segmentation() {
        let mut events = cycle(0.0);
        events.extend(cycle(30.0));
        events.extend(cycle(60.0)[..2].iter().copied());
        let mut buf = Vec::new();
        write_event_log(&mut buf, &events).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,state_from,state_to,command,otp,trigger_probability,step\n"));
        assert_eq!(read_event_log(buf.as_slice()).unwrap(), events);
        let recs = episode_records(&events, &ApDurations::default(), "p");
        assert_eq!(recs.len(), 2);
        assert!(recs[0].end_t() < recs[1].start_t());
    }
}
