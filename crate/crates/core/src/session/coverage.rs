use serde::Serialize;

use super::{ArmState, BaseState, EpisodeRecord, RobotStatusFrame, SessionRecord, FRAME_PERIOD};

/// How long an arm primitive may run before the excess counts as an operator pause.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauseRule {
    pub nominal_stretch: f64,
    pub nominal_tuck: f64,
    pub threshold: f64,
}

impl Default for PauseRule {
    fn default() -> Self {
        Self { nominal_stretch: 3.0, nominal_tuck: 3.0, threshold: 1.0 }
    }
}

/// How many episodes fit the fixed action-primitive model. Deviation
/// categories are exclusive, assigned in the order non-default OTP, pause
/// during reach, pause during tuck.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApCoverageReport {
    pub total_episodes: usize,
    pub conforming: usize,
    pub paused_during_reach: usize,
    pub paused_during_tuck: usize,
    pub non_default_otp: usize,
    /// `None` when there are no episodes.
    pub coverage_fraction: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Deviation {
    NonDefaultOtp,
    ReachPause,
    TuckPause,
}

fn longest_run(rows: &[RobotStatusFrame], arm: ArmState) -> usize {
    let mut best = 0;
    let mut run = 0;
    for r in rows {
        run = if r.arm_state == arm { run + 1 } else { 0 };
        best = best.max(run);
    }
    best
}

fn classify(rows: &[RobotStatusFrame], rule: &PauseRule) -> Option<Deviation> {
    let reaching =
        |r: &RobotStatusFrame| r.base_state == BaseState::AtWork && matches!(r.arm_state, ArmState::Stretching | ArmState::Extended);
    let goalless = rows.iter().any(|r| reaching(r) && r.otp_goal.is_none());
    let retargeted = rows
        .windows(2)
        .any(|w| reaching(&w[0]) && reaching(&w[1]) && w[0].otp_goal.is_some() && w[0].otp_goal != w[1].otp_goal);
    if goalless || retargeted {
        return Some(Deviation::NonDefaultOtp);
    }
    let exceeds = |arm, nominal: f64| longest_run(rows, arm) as f64 * FRAME_PERIOD > nominal + rule.threshold + 1e-9;
    if exceeds(ArmState::Stretching, rule.nominal_stretch) {
        return Some(Deviation::ReachPause);
    }
    if exceeds(ArmState::Tucking, rule.nominal_tuck) {
        return Some(Deviation::TuckPause);
    }
    None
}

pub fn validate_ap_model(sessions: &[SessionRecord]) -> ApCoverageReport {
    validate_ap_model_with(sessions, &PauseRule::default())
}

pub fn validate_ap_model_with(sessions: &[SessionRecord], rule: &PauseRule) -> ApCoverageReport {
    let mut report = ApCoverageReport {
        total_episodes: 0,
        conforming: 0,
        paused_during_reach: 0,
        paused_during_tuck: 0,
        non_default_otp: 0,
        coverage_fraction: None,
    };
    for session in sessions {
        for ep in &session.episodes {
            report.total_episodes += 1;
            match classify(span(session, ep), rule) {
                None => report.conforming += 1,
                Some(Deviation::NonDefaultOtp) => report.non_default_otp += 1,
                Some(Deviation::ReachPause) => report.paused_during_reach += 1,
                Some(Deviation::TuckPause) => report.paused_during_tuck += 1,
            }
        }
    }
    if report.total_episodes > 0 {
        report.coverage_fraction = Some(report.conforming as f64 / report.total_episodes as f64);
    }
    report
}

fn span<'a>(session: &'a SessionRecord, ep: &EpisodeRecord) -> &'a [RobotStatusFrame] {
    &session.robot()[ep.start_step..=ep.end_step.min(session.len() - 1)]
}
