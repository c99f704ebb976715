//! A small dependency-free 1-D convolutional classifier.
//!
//! Inputs are `length x channels` blocks (5 timesteps x 100 keypoint values),
//! stored row-major with the time axis outermost. Every layer keeps that
//! layout, so a conv output is `out_len x out_channels`.

mod adam;
mod engine;
mod fit;
mod gradcheck;
mod io;
mod spec;
mod weights;

use thiserror::Error;

pub use adam::{Adam, AdamConfig};
pub use engine::{forward, loss_and_grad, predict_class, Network};
pub use fit::{fit, Dataset, EarlyStopping, FitReport, TrainConfig};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use io::{load_model, save_model, ModelFile, SCHEMA_VERSION};
pub use spec::{Activation, ConvSpec, DenseSpec, Head, NetworkSpec, CONV_DEPTH};
pub use weights::{ModelWeights, Tensor};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite input value")]
    NonFiniteInput,
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("empty {0} set")]
    EmptySet(&'static str),
    #[error("non-finite loss at epoch {epoch}")]
    DivergenceDetected { epoch: usize },
    #[error("model schema version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt model file: {0}")]
    CorruptFile(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;
