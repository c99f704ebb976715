use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::{
    is_confidence_cell, mirror_to_right, FeatureError, FeatureWindow, LabeledWindow, MirrorMap, Origin, OtpLabel,
    Result, TimingLabel, WINDOW_CELLS,
};
use crate::session::Otp;

/// Keeps every positive and an equal number of uniformly drawn negatives,
/// preserving input order. Nothing is up-sampled.
pub fn downsample_negatives(labeled: Vec<LabeledWindow<TimingLabel>>, seed: u64) -> Result<Vec<LabeledWindow<TimingLabel>>> {
    let positives = labeled.iter().filter(|l| l.label.value).count();
    if positives == 0 {
        return Err(FeatureError::NoPositives);
    }
    let negatives: Vec<usize> = labeled.iter().enumerate().filter(|(_, l)| !l.label.value).map(|(i, _)| i).collect();
    if negatives.len() <= positives {
        return Ok(labeled);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; labeled.len()];
    for k in sample(&mut rng, negatives.len(), positives) {
        keep[negatives[k]] = true;
    }
    Ok(labeled.into_iter().enumerate().filter(|(i, l)| l.label.value || keep[*i]).map(|(_, l)| l).collect())
}

/// Draws `left_windows.len()` new windows cell by cell from a normal
/// distribution with that cell's mean and (population) standard deviation.
/// Confidence cells are clamped to `[0, 1]`.
pub fn synthesize_left_gaussian(left_windows: &[FeatureWindow], seed: u64) -> Result<Vec<FeatureWindow>> {
    let n = left_windows.len();
    if n < 2 {
        return Err(FeatureError::InsufficientSamples { needed: 2, got: n });
    }
    let mut mean = vec![0.0; WINDOW_CELLS];
    for w in left_windows {
        for (m, v) in mean.iter_mut().zip(w.values()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut std = vec![0.0; WINDOW_CELLS];
    for w in left_windows {
        for ((s, v), m) in std.iter_mut().zip(w.values()).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    std.iter_mut().for_each(|s| *s = (*s / n as f64).sqrt());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pid: Arc<str> = Arc::from("synthetic");
    Ok((0..n)
        .map(|index| {
            let values = (0..WINDOW_CELLS)
                .map(|c| {
                    let z: f64 = rng.sample(StandardNormal);
                    let v = mean[c] + std[c] * z;
                    if is_confidence_cell(c) {
                        v.clamp(0.0, 1.0)
                    } else {
                        v
                    }
                })
                .collect();
            FeatureWindow {
                values,
                t_end: 0.0,
                step: index,
                participant_id: pid.clone(),
                session: 0,
                episode_id: None,
                origin: Origin::Gaussian { index },
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct AugmentationSummary {
    pub original_left: usize,
    pub original_middle: usize,
    pub original_right: usize,
    pub synthetic_left: usize,
    pub mirrored_right: usize,
}

impl AugmentationSummary {
    pub fn total_right(&self) -> usize {
        self.original_right + self.mirrored_right
    }
}

/// Location-set oversampling: double the left class with Gaussian samples,
/// then mirror every left window (original and synthetic) into a right one.
/// With fewer than two left windows the Gaussian step is skipped.
pub fn augment_otp(
    samples: Vec<LabeledWindow<OtpLabel>>,
    map: &MirrorMap,
    seed: u64,
) -> Result<(Vec<LabeledWindow<OtpLabel>>, AugmentationSummary)> {
    let count = |otp| samples.iter().filter(|s| s.label.0 == otp).count();
    let mut summary = AugmentationSummary {
        original_left: count(Otp::Left),
        original_middle: count(Otp::Middle),
        original_right: count(Otp::Right),
        ..Default::default()
    };
    let mut left: Vec<FeatureWindow> =
        samples.iter().filter(|s| s.label.0 == Otp::Left).map(|s| s.window.clone()).collect();
    let synthetic = if left.len() >= 2 { synthesize_left_gaussian(&left, seed)? } else { Vec::new() };
    summary.synthetic_left = synthetic.len();
    left.extend(synthetic.iter().cloned());
    let mirrored = mirror_to_right(&left, map);
    summary.mirrored_right = mirrored.len();

    let mut out = samples;
    out.extend(synthetic.into_iter().map(|window| LabeledWindow { window, label: OtpLabel(Otp::Left) }));
    out.extend(mirrored);
    Ok((out, summary))
}
