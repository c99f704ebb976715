//! Stylised upper-body poses in normalised image coordinates, camera facing
//! the participant: the participant's left side appears at larger x.

use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::script::{Activity, Handedness};
use crate::features::{MirrorMap, TimingKind};
use crate::session::{Keypoint, KeypointFrame, Otp, NUM_KEYPOINTS};

/// `(x, y, z, confidence)` per keypoint.
pub type Pose = [[f64; 4]; NUM_KEYPOINTS];

const NEUTRAL: Pose = [
    [0.50, 0.30, -0.30, 0.98],
    [0.52, 0.28, -0.28, 0.97],
    [0.53, 0.28, -0.28, 0.97],
    [0.545, 0.28, -0.27, 0.96],
    [0.48, 0.28, -0.28, 0.97],
    [0.47, 0.28, -0.28, 0.97],
    [0.455, 0.28, -0.27, 0.96],
    [0.57, 0.29, -0.20, 0.90],
    [0.43, 0.29, -0.20, 0.90],
    [0.52, 0.33, -0.28, 0.97],
    [0.48, 0.33, -0.28, 0.97],
    [0.62, 0.45, -0.10, 0.97],
    [0.38, 0.45, -0.10, 0.97],
    [0.66, 0.60, -0.05, 0.93],
    [0.34, 0.60, -0.05, 0.93],
    [0.60, 0.72, -0.20, 0.88],
    [0.40, 0.72, -0.20, 0.88],
    [0.61, 0.75, -0.21, 0.85],
    [0.39, 0.75, -0.21, 0.85],
    [0.595, 0.76, -0.22, 0.86],
    [0.405, 0.76, -0.22, 0.86],
    [0.585, 0.74, -0.215, 0.86],
    [0.415, 0.74, -0.215, 0.86],
    [0.58, 0.85, 0.00, 0.55],
    [0.42, 0.85, 0.00, 0.55],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    /// The participant's left: keypoints 13, 15, 17, 19, 21.
    Left,
    Right,
}

type P3 = [f64; 3];

fn set_arm(p: &mut Pose, side: Side, elbow: P3, wrist: P3) {
    let (base, s) = match side {
        Side::Left => (13, 1.0),
        Side::Right => (14, -1.0),
    };
    let hand = [(0.01 * s, 0.03, -0.01), (-0.005 * s, 0.04, -0.02), (-0.015 * s, 0.02, -0.015)];
    let mut put = |i: usize, v: P3| p[i][..3].copy_from_slice(&v);
    put(base, elbow);
    put(base + 2, wrist);
    for (k, (dx, dy, dz)) in hand.iter().enumerate() {
        put(base + 4 + 2 * k, [wrist[0] + dx, wrist[1] + dy, wrist[2] + dz]);
    }
}

fn tilt(p: &mut Pose, amount: f64) {
    p[11][1] += amount;
    p[12][1] -= amount;
}

fn lerp(a: &Pose, b: &Pose, w: f64) -> Pose {
    let mut out = *a;
    for (o, (x, y)) in out.iter_mut().zip(a.iter().zip(b)) {
        for ch in 0..3 {
            o[ch] = (1.0 - w) * x[ch] + w * y[ch];
        }
    }
    out
}

/// What the participant is doing on a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gesture {
    Activity(Activity),
    Signal { kind: TimingKind, otp: Otp, cue_strength: f64 },
    /// Placing or taking the object at the extended gripper.
    Transfer,
}

/// Per-participant placement of the skeleton in the image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyShape {
    pub dx: f64,
    pub dy: f64,
    pub scale: f64,
    pub phase: f64,
}

impl BodyShape {
    /// Stable per participant id, so a participant looks the same in every session.
    pub fn of(participant_id: &str) -> Self {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in participant_id.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100_0000_01b3);
        }
        let u = |bits: u32| ((h >> bits) & 0xffff) as f64 / 65535.0;
        Self { dx: (u(0) - 0.5) * 0.06, dy: (u(16) - 0.5) * 0.06, scale: 0.95 + 0.1 * u(32), phase: TAU * u(48) }
    }
}

impl Default for BodyShape {
    fn default() -> Self {
        Self { dx: 0.0, dy: 0.0, scale: 1.0, phase: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GestureModel {
    pub activity_amplitude: f64,
    pub activity_frequency: f64,
    /// Shoulder drop while signalling a side position.
    pub lean: f64,
    pub nod_amplitude: f64,
    pub confidence_noise: f64,
    pub mirror: MirrorMap,
}

impl Default for GestureModel {
    fn default() -> Self {
        Self {
            activity_amplitude: 0.05,
            activity_frequency: 0.5,
            lean: 0.025,
            nod_amplitude: 0.02,
            confidence_noise: 0.02,
            mirror: MirrorMap::default(),
        }
    }
}

impl GestureModel {
    pub fn neutral() -> Pose {
        NEUTRAL
    }

    fn activity(&self, activity: Activity, t: f64, hand: Handedness, phase: f64) -> Pose {
        let mut p = NEUTRAL;
        let a = self.activity_amplitude;
        let w = TAU * self.activity_frequency * t + phase;
        let (dom, other, s) = match hand {
            Handedness::Right => (Side::Right, Side::Left, -1.0),
            Handedness::Left => (Side::Left, Side::Right, 1.0),
        };
        match activity {
            Activity::Idle => {
                let b = 0.003 * (0.5 * w).sin();
                p[11][1] += b;
                p[12][1] += b;
            }
            Activity::Sorting => {
                set_arm(&mut p, Side::Left, [0.65, 0.60, -0.08], [0.60 + a * w.sin(), 0.74, -0.22]);
                set_arm(&mut p, Side::Right, [0.35, 0.60, -0.08], [0.40 - a * w.sin(), 0.74, -0.22]);
            }
            Activity::Assembling => {
                let d = 0.4 * a * (2.0 * w).sin();
                set_arm(&mut p, Side::Left, [0.63, 0.62, -0.10], [0.53 + d, 0.70, -0.28]);
                set_arm(&mut p, Side::Right, [0.37, 0.62, -0.10], [0.47 - d, 0.70, -0.28]);
            }
            Activity::Painting => {
                let x = 0.5 + 0.05 * s;
                set_arm(&mut p, dom, [0.5 + 0.14 * s, 0.60, -0.12], [x, 0.68 + a * (1.4 * w).sin(), -0.30]);
                set_arm(&mut p, other, [0.5 - 0.14 * s, 0.62, -0.08], [0.5 - 0.08 * s, 0.72, -0.25]);
            }
            Activity::ReachShelf => {
                let cycle = (t + phase).rem_euclid(8.0);
                if cycle < 1.5 {
                    set_arm(&mut p, dom, [0.5 + 0.20 * s, 0.42, -0.05], [0.5 + 0.25 * s, 0.30, -0.05]);
                } else {
                    return self.activity(Activity::Sorting, t, hand, phase);
                }
            }
        }
        p
    }

    /// Left-position variant, signalled with the right arm.
    fn signal_left(&self, kind: TimingKind) -> Pose {
        let mut p = NEUTRAL;
        match kind {
            TimingKind::EpStart => set_arm(&mut p, Side::Right, [0.30, 0.38, -0.12], [0.27, 0.20, -0.15]),
            _ => set_arm(&mut p, Side::Right, [0.33, 0.52, -0.35], [0.28, 0.50, -0.60]),
        }
        tilt(&mut p, self.lean);
        p
    }

    fn signal_middle(&self, kind: TimingKind) -> Pose {
        let mut p = NEUTRAL;
        match kind {
            TimingKind::EpStart => set_arm(&mut p, Side::Right, [0.42, 0.40, -0.25], [0.47, 0.20, -0.35]),
            _ => set_arm(&mut p, Side::Right, [0.42, 0.53, -0.35], [0.48, 0.50, -0.62]),
        }
        p
    }

    fn mirrored(&self, pose: &Pose) -> Pose {
        let mut flat: Vec<f64> = pose.iter().flatten().copied().collect();
        self.mirror.apply_frame(&mut flat);
        let mut out = *pose;
        for (o, chunk) in out.iter_mut().zip(flat.chunks(4)) {
            o.copy_from_slice(chunk);
        }
        out
    }

    /// Noise-free pose; the right-position signal is the keypoint mirror of
    /// the left one, so mirrored training windows look like real ones.
    pub fn pose(&self, gesture: Gesture, t: f64, hand: Handedness, phase: f64) -> Pose {
        match gesture {
            Gesture::Activity(a) => self.activity(a, t, hand, phase),
            Gesture::Signal { kind: TimingKind::OtpComplete, .. } => {
                let mut p = NEUTRAL;
                set_arm(&mut p, Side::Left, [0.63, 0.62, -0.10], [0.54, 0.52, -0.22]);
                set_arm(&mut p, Side::Right, [0.37, 0.62, -0.10], [0.46, 0.52, -0.22]);
                let nod = self.nod_amplitude * (TAU * 1.5 * t).sin();
                for k in p.iter_mut().take(11) {
                    k[1] += nod;
                }
                p
            }
            Gesture::Signal { kind, otp, cue_strength } => {
                let m = self.signal_middle(kind);
                match otp {
                    Otp::Middle => m,
                    Otp::Left => lerp(&m, &self.signal_left(kind), cue_strength),
                    Otp::Right => lerp(&m, &self.mirrored(&self.signal_left(kind)), cue_strength),
                }
            }
            Gesture::Transfer => {
                let mut p = NEUTRAL;
                set_arm(&mut p, Side::Left, [0.62, 0.62, -0.25], [0.55, 0.66, -0.45]);
                set_arm(&mut p, Side::Right, [0.38, 0.62, -0.25], [0.45, 0.66, -0.45]);
                p
            }
        }
    }

    /// Places the pose for `body` and adds sensor noise.
    pub fn render(&self, pose: &Pose, t: f64, body: &BodyShape, noise_std: f64, rng: &mut ChaCha8Rng) -> KeypointFrame {
        let mut kp = [Keypoint::default(); NUM_KEYPOINTS];
        for (k, p) in kp.iter_mut().zip(pose) {
            let mut n = || noise_std * rng.sample::<f64, _>(StandardNormal);
            let x = 0.5 + body.scale * (p[0] - 0.5) + body.dx + n();
            let y = 0.5 + body.scale * (p[1] - 0.5) + body.dy + n();
            let z = body.scale * p[2] + n();
            let c = p[3] + self.confidence_noise * rng.sample::<f64, _>(StandardNormal);
            *k = Keypoint { x: x.clamp(0.0, 1.0), y: y.clamp(0.0, 1.0), z, c: c.clamp(0.0, 1.0) };
        }
        KeypointFrame { t, kp }
    }
}

/// Signed shoulder-line tilt: positive when the left-position cue is shown,
/// negative for its mirror.
pub fn lean_feature(frame: &KeypointFrame) -> f64 {
    frame.kp[11].y - frame.kp[12].y
}
