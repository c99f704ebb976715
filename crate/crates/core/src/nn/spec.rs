use serde::{Deserialize, Serialize};

use super::{NnError, Result};
use crate::features::WINDOW;
use crate::session::FEATURES_PER_FRAME;

pub const CONV_DEPTH: usize = 6;

/// Channel counts of the six conv layers and the dense layer, bottom to top.
const LAYER_SIZES: [usize; 7] = [8, 8, 8, 16, 16, 16, 8];

named_enum! {
    pub enum Activation {
        Relu => "relu",
        Tanh => "tanh",
        Identity => "identity",
    }
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `a`.
    #[inline]
    pub fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

named_enum! {
    /// Output layer: one sigmoid unit, or a three-way softmax.
    pub enum Head {
        Binary => "binary",
        ThreeWay => "three_way",
    }
}

impl Head {
    pub fn units(self) -> usize {
        match self {
            Head::Binary => 1,
            Head::ThreeWay => 3,
        }
    }

    pub fn classes(self) -> usize {
        match self {
            Head::Binary => 2,
            Head::ThreeWay => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseSpec {
    pub units: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_len: usize,
    pub input_channels: usize,
    pub conv: Vec<ConvSpec>,
    pub dense: DenseSpec,
    pub head: Head,
}

impl NetworkSpec {
    /// Six kernel-3 "same" conv layers of 8, 8, 8, 16, 16, 16 channels, an
    /// 8-unit dense layer, all rectified, then the output head.
    pub fn handover(head: Head) -> Self {
        Self::with_channels(WINDOW, FEATURES_PER_FRAME, LAYER_SIZES, head)
    }

    pub fn with_channels(input_len: usize, input_channels: usize, sizes: [usize; 7], head: Head) -> Self {
        let conv = sizes[..CONV_DEPTH]
            .iter()
            .map(|&out_channels| ConvSpec { out_channels, kernel: 3, stride: 1, padding: 1, activation: Activation::Relu })
            .collect();
        Self {
            input_len,
            input_channels,
            conv,
            dense: DenseSpec { units: sizes[CONV_DEPTH], activation: Activation::Relu },
            head,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NnError::InvalidSpec(m));
        if self.conv.len() != CONV_DEPTH {
            return bad(format!("{} conv layers, expected {CONV_DEPTH}", self.conv.len()));
        }
        if self.input_len == 0 || self.input_channels == 0 || self.dense.units == 0 {
            return bad("zero-sized input or dense layer".into());
        }
        let mut len = self.input_len;
        for (i, c) in self.conv.iter().enumerate() {
            if c.out_channels == 0 || c.kernel == 0 || c.stride == 0 {
                return bad(format!("conv{i} has a zero dimension"));
            }
            if len + 2 * c.padding < c.kernel {
                return bad(format!("conv{i} kernel {} longer than padded input {}", c.kernel, len + 2 * c.padding));
            }
            len = (len + 2 * c.padding - c.kernel) / c.stride + 1;
        }
        Ok(())
    }

    /// `(length, channels)` entering each conv layer, plus the final conv output.
    pub fn conv_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = vec![(self.input_len, self.input_channels)];
        for c in &self.conv {
            let (len, _) = *shapes.last().unwrap();
            shapes.push(((len + 2 * c.padding - c.kernel) / c.stride + 1, c.out_channels));
        }
        shapes
    }

    pub fn input_size(&self) -> usize {
        self.input_len * self.input_channels
    }

    pub fn flat_size(&self) -> usize {
        let (len, ch) = *self.conv_shapes().last().unwrap();
        len * ch
    }

    /// Names and shapes of every parameter tensor, in storage order.
    pub fn tensor_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let shapes = self.conv_shapes();
        for (i, c) in self.conv.iter().enumerate() {
            out.push((format!("conv{i}.weight"), vec![c.out_channels, c.kernel, shapes[i].1]));
            out.push((format!("conv{i}.bias"), vec![c.out_channels]));
        }
        out.push(("dense.weight".into(), vec![self.dense.units, self.flat_size()]));
        out.push(("dense.bias".into(), vec![self.dense.units]));
        out.push(("output.weight".into(), vec![self.head.units(), self.dense.units]));
        out.push(("output.bias".into(), vec![self.head.units()]));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensor_shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }
}
