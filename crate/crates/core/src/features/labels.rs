use std::collections::BTreeSet;

use super::FeatureWindow;
use crate::session::{EpisodeRecord, Otp, TransitionEvent, TransitionKind};

named_enum! {
    /// The three transitions a timing classifier anticipates.
    pub enum TimingKind {
        EpStart => "ep_start",
        OtpStart => "otp_start",
        OtpComplete => "otp_complete",
    }
}

impl TimingKind {
    pub fn transition(self) -> TransitionKind {
        match self {
            TimingKind::EpStart => TransitionKind::EpisodeStart,
            TimingKind::OtpStart => TransitionKind::OtpStart,
            TimingKind::OtpComplete => TransitionKind::OtpComplete,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimingLabel {
    pub kind: TimingKind,
    pub value: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OtpLabel(pub Otp);

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow<L> {
    pub window: FeatureWindow,
    pub label: L,
}

/// Per-step labels: step `i` is true iff a `kind` transition happens at some
/// step `j` with `j - horizon <= i < j`.
pub fn timing_labels(n_steps: usize, transitions: &[TransitionEvent], kind: TimingKind, horizon: usize) -> Vec<bool> {
    let mut out = vec![false; n_steps];
    for ev in transitions.iter().filter(|e| e.kind == kind.transition()) {
        let hi = ev.step.min(n_steps);
        for slot in &mut out[ev.step.saturating_sub(horizon).min(hi)..hi] {
            *slot = true;
        }
    }
    out
}

pub fn label_timing_windows(
    windows: Vec<FeatureWindow>,
    transitions: &[TransitionEvent],
    kind: TimingKind,
    horizon: usize,
) -> Vec<LabeledWindow<TimingLabel>> {
    let n = windows.iter().map(|w| w.step + 1).max().unwrap_or(0);
    let labels = timing_labels(n, transitions, kind, horizon);
    windows
        .into_iter()
        .map(|w| {
            let value = labels[w.step];
            LabeledWindow { window: w, label: TimingLabel { kind, value } }
        })
        .collect()
}

/// Location-classifier instances: the `horizon` steps before each episode
/// start and each transfer start, labelled with the episode's transfer
/// position. `windows[i]` must be the window ending at step `i`.
pub fn otp_training_windows(
    windows: &[FeatureWindow],
    episodes: &[EpisodeRecord],
    horizon: usize,
) -> Vec<LabeledWindow<OtpLabel>> {
    let mut out = Vec::new();
    for ep in episodes {
        let Some(otp) = ep.otp() else { continue };
        let mut steps = BTreeSet::new();
        for kind in [TransitionKind::EpisodeStart, TransitionKind::OtpStart] {
            if let Some(ev) = ep.transition(kind) {
                steps.extend(ev.step.saturating_sub(horizon)..ev.step.min(windows.len()));
            }
        }
        for s in steps {
            debug_assert_eq!(windows[s].step, s);
            out.push(LabeledWindow { window: windows[s].clone(), label: OtpLabel(otp) });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::TransitionKind;

    fn ev(step: usize, kind: TransitionKind) -> TransitionEvent {
        TransitionEvent { t: step as f64 * 0.1, step, kind, otp: None }
    }

    fn windows(n: usize) -> Vec<FeatureWindow> {
        (0..n)
            .map(|i| {
                let mut w = FeatureWindow::from_values(vec![0.0; super::super::WINDOW_CELLS]).unwrap();
                w.step = i;
                w
            })
            .collect()
    }

    #[test]
    fn fifty_steps_before_episode_start() {
        let out = label_timing_windows(windows(200), &[ev(100, TransitionKind::EpisodeStart)], TimingKind::EpStart, 50);
        for lw in &out {
            assert_eq!(lw.label.value, (50..100).contains(&lw.window.step), "step {}", lw.window.step);
        }
    }

    #[test]
    fn other_kinds_ignored() {
        let out = label_timing_windows(windows(200), &[ev(100, TransitionKind::OtpStart)], TimingKind::EpStart, 50);
        assert!(out.iter().all(|lw| !lw.label.value));
    }

    #[test]
    fn early_transition_truncates() {
        let out = label_timing_windows(windows(20), &[ev(3, TransitionKind::OtpComplete)], TimingKind::OtpComplete, 50);
        let trues: Vec<usize> = out.iter().filter(|l| l.label.value).map(|l| l.window.step).collect();
        assert_eq!(trues, vec![0, 1, 2]);
    }
}
