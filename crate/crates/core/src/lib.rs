//! Learned timing and location policy for mobile-robot object handovers.
//!
//! The crate covers the whole pipeline: ingesting session logs, turning
//! upper-body keypoint streams into labelled windows, training small 1-D
//! convolutional classifiers from scratch, running them inside the handover
//! state machine, simulating crafting sessions for closed-loop evaluation, and
//! the statistics used to compare teleoperated and autonomous sessions.

/// Declares a fieldless enum with a fixed snake_case text form used by every
/// file format in the crate.
macro_rules! named_enum {
    (
        $(#[$meta:meta])*
        pub enum $name:ident { $($variant:ident => $text:literal),+ $(,)? }
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl std::str::FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
                match s.trim() {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!("unknown {} `{}`", stringify!($name), other)),
                }
            }
        }
    };
}

pub mod classifier;
pub mod cli;
pub mod features;
pub mod nn;
pub mod policy;
pub mod session;
pub mod sim;
pub mod stats;

pub use classifier::{ClassifierKind, TrainedClassifier};
pub use features::{FeatureWindow, MirrorMap};
pub use nn::{ModelWeights, NetworkSpec, TrainConfig};
pub use policy::{HandoverPolicy, Phase};
pub use session::{Otp, SessionRecord};
