use std::fmt;

use serde::Serialize;

use super::engine::SimGroundTruth;
use super::{Result, SimError};
use crate::features::TimingKind;
use crate::policy::{PolicyEvent, Primitive};

/// Largest distance in seconds between a command and the signal it answers.
pub const MATCH_WINDOW: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyStats {
    pub n: usize,
    pub median: f64,
    pub mean: f64,
    pub max: f64,
}

impl LatencyStats {
    fn of(values: &mut [f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        values.sort_by(f64::total_cmp);
        let n = values.len();
        let median = if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) };
        Some(Self { n, median, mean: values.iter().sum::<f64>() / n as f64, max: values[n - 1] })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyScore {
    pub intents: usize,
    pub matched: usize,
    pub misses: usize,
    /// Commands answering no signal: timing prediction errors.
    pub false_triggers: usize,
    pub otp_matched: usize,
    pub otp_correct: usize,
    /// Over matched transfer starts only.
    pub otp_accuracy: Option<f64>,
    /// Signals started while a primitive was executing.
    pub motion_primitive_errors: usize,
    pub deadlocks: usize,
    /// Command time minus signal onset, per transition kind.
    pub latency: Vec<(TimingKind, LatencyStats)>,
}

impl PolicyScore {
    pub fn latency_of(&self, kind: TimingKind) -> Option<&LatencyStats> {
        self.latency.iter().find(|(k, _)| *k == kind).map(|(_, l)| l)
    }
}

impl fmt::Display for PolicyScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "intents {} matched {} missed {} false triggers {} motion-primitive errors {} deadlocks {}",
            self.intents, self.matched, self.misses, self.false_triggers, self.motion_primitive_errors, self.deadlocks
        )?;
        if let Some(a) = self.otp_accuracy {
            write!(f, " otp accuracy {a:.3}")?;
        }
        for (k, l) in &self.latency {
            write!(f, " {k} latency median {:.2}s", l.median)?;
        }
        Ok(())
    }
}

fn answers(p: Primitive) -> Option<TimingKind> {
    match p {
        Primitive::MoveToWork => Some(TimingKind::EpStart),
        Primitive::StretchArm => Some(TimingKind::OtpStart),
        Primitive::TuckArmConclude => Some(TimingKind::OtpComplete),
        Primitive::ReturnToStorage => None,
    }
}

/// Greedy in command order: each command takes the nearest unanswered signal
/// of its kind within [`MATCH_WINDOW`]. Injected signals are never intents.
pub fn score_policy(events: &[PolicyEvent], truth: &SimGroundTruth) -> Result<PolicyScore> {
    if let Some(e) = events.iter().find(|e| e.t > truth.duration() + 1e-9) {
        return Err(SimError::MismatchedRun(format!("command at {} after the run's end at {}", e.t, truth.duration())));
    }
    let intents: Vec<_> = truth.signals.iter().filter(|s| !s.injected).collect();
    let mut taken = vec![false; intents.len()];
    let mut score = PolicyScore {
        intents: intents.len(),
        matched: 0,
        misses: 0,
        false_triggers: 0,
        otp_matched: 0,
        otp_correct: 0,
        otp_accuracy: None,
        motion_primitive_errors: truth.signals.iter().filter(|s| s.robot_busy).count(),
        deadlocks: usize::from(truth.deadlock.is_some()),
        latency: Vec::new(),
    };
    let mut latencies: Vec<(TimingKind, Vec<f64>)> = TimingKind::ALL.iter().map(|k| (*k, Vec::new())).collect();
    for e in events {
        let Some(kind) = e.command.and_then(answers) else { continue };
        let best = intents
            .iter()
            .enumerate()
            .filter(|(i, s)| !taken[*i] && s.kind == kind && (e.t - s.onset_t).abs() <= MATCH_WINDOW + 1e-9)
            .min_by(|a, b| (e.t - a.1.onset_t).abs().total_cmp(&(e.t - b.1.onset_t).abs()));
        let Some((i, s)) = best else {
            score.false_triggers += 1;
            continue;
        };
        taken[i] = true;
        score.matched += 1;
        latencies.iter_mut().find(|(k, _)| *k == kind).expect("every kind").1.push(e.t - s.onset_t);
        if kind == TimingKind::OtpStart {
            score.otp_matched += 1;
            score.otp_correct += usize::from(e.otp == Some(s.otp));
        }
    }
    score.misses = score.intents - score.matched;
    score.otp_accuracy = (score.otp_matched > 0).then(|| score.otp_correct as f64 / score.otp_matched as f64);
    score.latency = latencies.into_iter().filter_map(|(k, mut v)| LatencyStats::of(&mut v).map(|l| (k, l))).collect();
    Ok(score)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{ApDurations, HandoverPolicy, TriggerConfig};
    use crate::session::Otp;
    use crate::sim::{run_closed_loop, GestureModel, InjectedSignal, ModelSource, ScriptGenerator, SimRun};

    fn oracle_run(script: &crate::sim::ParticipantScript) -> SimRun {
        let policy = HandoverPolicy::new(TriggerConfig::default(), ApDurations::default()).unwrap();
        run_closed_loop(policy, ModelSource::Oracle, script, &GestureModel::default(), 5).unwrap()
    }

    #[test]
    fn perfect_oracle_run() {
        let script = ScriptGenerator { episodes: 4, otp_weights: [1.0, 1.0, 1.0], ..Default::default() }.generate("p", 2);
        let run = oracle_run(&script);
        let s = score_policy(&run.events, &run.truth).unwrap();
        assert_eq!((s.false_triggers, s.misses, s.motion_primitive_errors, s.deadlocks), (0, 0, 0, 0));
        assert_eq!(s.intents, 12);
        assert_eq!(s.otp_accuracy, Some(1.0));
        assert!((s.latency_of(TimingKind::EpStart).unwrap().max - 0.2).abs() < 1e-9);
    }

    #[test]
    fn injected_early_triggers_counted() {
        let mut script = ScriptGenerator { episodes: 4, ..Default::default() }.generate("p", 3);
        // Two start signals while the robot idles between episodes.
        for e in 1..3 {
            let t = script.episodes[e].ep_start - 3.0;
            script.injected.push(InjectedSignal { t, kind: TimingKind::EpStart, duration: 1.0, otp: Otp::Middle });
        }
        let run = oracle_run(&script);
        let s = score_policy(&run.events, &run.truth).unwrap();
        assert_eq!(s.false_triggers, 2);
        assert_eq!(s.matched + s.misses, s.intents);
        assert_eq!(s.deadlocks, 0);
    }

    #[test]
    fn signal_during_tuck_is_primitive_error() {
        let mut script = ScriptGenerator { episodes: 2, ..Default::default() }.generate("p", 4);
        let run = oracle_run(&script);
        let tuck = run.events.iter().find(|e| e.command == Some(Primitive::TuckArmConclude)).unwrap().t;
        script.injected.push(InjectedSignal { t: tuck + 1.0, kind: TimingKind::OtpComplete, duration: 1.0, otp: Otp::Middle });
        let run = oracle_run(&script);
        let s = score_policy(&run.events, &run.truth).unwrap();
        assert_eq!(s.motion_primitive_errors, 1);
        assert_eq!(s.false_triggers, 0);
    }

    #[test]
    fn events_past_the_run_rejected() {
        let script = ScriptGenerator { episodes: 1, ..Default::default() }.generate("p", 5);
        let mut run = oracle_run(&script);
        run.events[0].t = 1e6;
        assert!(matches!(score_policy(&run.events, &run.truth), Err(SimError::MismatchedRun(_))));
    }
}
