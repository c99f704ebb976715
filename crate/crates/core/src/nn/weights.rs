use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{NetworkSpec, NnError, Result};

/// A named parameter array, flat and row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Parameters in [`NetworkSpec::tensor_shapes`] order: each conv weight and
/// bias, then the dense layer, then the output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub tensors: Vec<Tensor>,
}

impl ModelWeights {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        let tensors = spec
            .tensor_shapes()
            .into_iter()
            .map(|(name, shape)| {
                let n = shape.iter().product();
                Tensor { name, shape, data: vec![0.0; n] }
            })
            .collect();
        Self { tensors }
    }

    /// Weights uniform in `±sqrt(6 / fan_in)`, biases zero.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = Self::zeros(spec);
        for t in w.tensors.iter_mut().filter(|t| t.name.ends_with(".weight")) {
            let fan_in: usize = t.shape[1..].iter().product();
            let limit = (6.0 / fan_in as f64).sqrt();
            for v in &mut t.data {
                *v = rng.random_range(-limit..limit);
            }
        }
        w
    }

    pub fn check(&self, spec: &NetworkSpec) -> Result<()> {
        let shapes = spec.tensor_shapes();
        if shapes.len() != self.tensors.len() {
            return Err(NnError::ShapeMismatch(format!("{} tensors, spec needs {}", self.tensors.len(), shapes.len())));
        }
        for ((name, shape), t) in shapes.iter().zip(&self.tensors) {
            if &t.shape != shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(NnError::ShapeMismatch(format!(
                    "{name}: shape {:?} with {} values, spec needs {shape:?}",
                    t.shape,
                    t.data.len()
                )));
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(NnError::ShapeMismatch(format!("{name} holds non-finite values")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.tensors.iter().flat_map(|t| t.data.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.tensors.iter_mut().flat_map(|t| t.data.iter_mut())
    }

    /// Flat parameter access across tensors.
    pub fn get(&self, mut index: usize) -> f64 {
        for t in &self.tensors {
            if index < t.data.len() {
                return t.data[index];
            }
            index -= t.data.len();
        }
        panic!("parameter index out of range")
    }

    pub fn set(&mut self, mut index: usize, value: f64) {
        for t in &mut self.tensors {
            if index < t.data.len() {
                t.data[index] = value;
                return;
            }
            index -= t.data.len();
        }
        panic!("parameter index out of range")
    }

    pub fn fill(&mut self, value: f64) {
        self.iter_mut().for_each(|v| *v = value);
    }
}

#[cfg(test)]
mod tests {
    use super::super::Head;
    use super::*;

    #[test]
    fn init_is_seeded_and_bounded() {
        let spec = NetworkSpec::handover(Head::Binary);
        let a = ModelWeights::init(&spec, 4);
        assert_eq!(a, ModelWeights::init(&spec, 4));
        assert_ne!(a, ModelWeights::init(&spec, 5));
        a.check(&spec).unwrap();
        assert_eq!(a.len(), spec.parameter_count());
        let first = &a.tensors[0];
        let limit = (6.0f64 / 300.0).sqrt();
        assert!(first.data.iter().all(|v| v.abs() < limit));
        assert!(a.tensors[1].data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn flat_access() {
        let spec = NetworkSpec::handover(Head::ThreeWay);
        let mut w = ModelWeights::zeros(&spec);
        let last = w.len() - 1;
        w.set(2400, 1.5);
        w.set(last, -2.0);
        assert_eq!(w.tensors[1].data[0], 1.5);
        assert_eq!(w.get(last), -2.0);
    }
}
