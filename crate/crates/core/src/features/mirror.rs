use serde::{Deserialize, Serialize};

use super::{FeatureError, FeatureWindow, LabeledWindow, Origin, OtpLabel, Result, WINDOW};
use crate::session::{Otp, CHANNELS_PER_KEYPOINT, FEATURES_PER_FRAME, NUM_KEYPOINTS};

const DEFAULT_MAP: &str = include_str!("../../data/mirror_map.toml");

/// Left/right keypoint pairs whose `(x, y, z, c)` tuples are interchanged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MirrorMap {
    pairs: Vec<(usize, usize)>,
    unpaired: Vec<usize>,
}

impl MirrorMap {
    pub fn new(pairs: Vec<(usize, usize)>, unpaired: Vec<usize>) -> Result<Self> {
        let mut seen = [0usize; NUM_KEYPOINTS];
        for &(a, b) in &pairs {
            if a == b {
                return Err(FeatureError::BadMirrorMap(format!("keypoint {a} paired with itself")));
            }
            for i in [a, b] {
                *seen.get_mut(i).ok_or_else(|| FeatureError::BadMirrorMap(format!("index {i} out of range")))? += 1;
            }
        }
        for &i in &unpaired {
            *seen.get_mut(i).ok_or_else(|| FeatureError::BadMirrorMap(format!("index {i} out of range")))? += 1;
        }
        if let Some(i) = seen.iter().position(|&n| n != 1) {
            return Err(FeatureError::BadMirrorMap(format!("keypoint {i} covered {} times", seen[i])));
        }
        Ok(Self { pairs, unpaired })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: MirrorMap = toml::from_str(text).map_err(|e| FeatureError::BadMirrorMap(e.to_string()))?;
        Self::new(raw.pairs, raw.unpaired)
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn unpaired(&self) -> &[usize] {
        &self.unpaired
    }

    /// Swaps paired keypoint tuples in one 100-value frame, in place.
    pub fn apply_frame(&self, frame: &mut [f64]) {
        debug_assert_eq!(frame.len(), FEATURES_PER_FRAME);
        for &(a, b) in &self.pairs {
            for ch in 0..CHANNELS_PER_KEYPOINT {
                frame.swap(a * CHANNELS_PER_KEYPOINT + ch, b * CHANNELS_PER_KEYPOINT + ch);
            }
        }
    }

    pub fn apply(&self, window: &FeatureWindow) -> FeatureWindow {
        let mut out = window.clone();
        for r in 0..WINDOW {
            self.apply_frame(&mut out.values_mut()[r * FEATURES_PER_FRAME..(r + 1) * FEATURES_PER_FRAME]);
        }
        out.origin = Origin::Mirrored;
        out
    }
}

impl Default for MirrorMap {
    /// The upper-body keypoint set: nose unpaired, every eye/ear/mouth/arm/hand/hip point paired.
    fn default() -> Self {
        Self::from_toml(DEFAULT_MAP).expect("shipped mirror map is valid")
    }
}

pub fn mirror_to_right(left_windows: &[FeatureWindow], map: &MirrorMap) -> Vec<LabeledWindow<OtpLabel>> {
    left_windows.iter().map(|w| LabeledWindow { window: map.apply(w), label: OtpLabel(Otp::Right) }).collect()
}
