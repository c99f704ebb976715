use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::engine::{predict_class, Network};
use super::{Adam, AdamConfig, ModelWeights, NetworkSpec, NnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            learning_rate: adam.learning_rate,
            batch_size: 8,
            max_epochs: 100,
            patience: 20,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            val_fraction: 0.2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(NnError::InvalidSpec(m.to_string()));
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("val_fraction must lie in (0, 1)");
        }
        if self.patience > self.max_epochs {
            return bad("patience exceeds max_epochs");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, beta1: self.beta1, beta2: self.beta2, epsilon: self.epsilon }
    }
}

/// Flat samples of a fixed size with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    sample_size: usize,
    inputs: Vec<f64>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(sample_size: usize) -> Self {
        Self { sample_size, inputs: Vec::new(), labels: Vec::new() }
    }

    pub fn push(&mut self, sample: &[f64], label: usize) {
        assert_eq!(sample.len(), self.sample_size, "sample size");
        self.inputs.extend_from_slice(sample);
        self.labels.push(label);
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.sample_size..(i + 1) * self.sample_size]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut out = Self::new(self.sample_size);
        for &i in indices {
            out.push(self.sample(i), self.labels[i]);
        }
        out
    }

    fn check(&self, spec: &NetworkSpec, what: &'static str) -> Result<()> {
        if self.is_empty() {
            return Err(NnError::EmptySet(what));
        }
        if self.sample_size != spec.input_size() {
            return Err(NnError::ShapeMismatch(format!("{what} samples hold {} values, spec needs {}", self.sample_size, spec.input_size())));
        }
        if let Some(l) = self.labels.iter().find(|&&l| l >= spec.head.classes()) {
            return Err(NnError::ShapeMismatch(format!("{what} label {l} invalid for {} head", spec.head)));
        }
        if self.inputs.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFiniteInput);
        }
        Ok(())
    }

    /// Per-sample output probabilities.
    pub fn probabilities(&self, weights: &ModelWeights, spec: &NetworkSpec) -> Result<Vec<Vec<f64>>> {
        weights.check(spec)?;
        let mut net = Network::new(spec)?;
        Ok((0..self.len())
            .map(|i| {
                let mut p = vec![0.0; spec.head.units()];
                net.probabilities(weights, self.sample(i), &mut p);
                p
            })
            .collect())
    }

    pub fn accuracy(&self, weights: &ModelWeights, spec: &NetworkSpec) -> Result<f64> {
        let probs = self.probabilities(weights, spec)?;
        let hits = probs.iter().zip(&self.labels).filter(|(p, &l)| predict_class(spec.head, p) == l).count();
        Ok(hits as f64 / self.len().max(1) as f64)
    }

    fn mean_loss(&self, net: &mut Network, weights: &ModelWeights, scratch: &mut ModelWeights) -> f64 {
        let mut total = 0.0;
        for i in 0..self.len() {
            total += net.accumulate(weights, self.sample(i), self.labels[i], 0.0, scratch);
        }
        total / self.len() as f64
    }
}

/// Patience counter over validation losses. Epochs are numbered from 1.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: f64::INFINITY, best_epoch: 0, epoch: 0 }
    }

    /// Records one epoch's validation loss; returns true if it is a new best.
    pub fn observe(&mut self, val_loss: f64) -> bool {
        self.epoch += 1;
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = self.epoch;
            true
        } else {
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.epoch - self.best_epoch >= self.patience
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub stopped_early: bool,
}

/// Minibatch Adam with early stopping on validation loss. Returns the
/// weights from the epoch with the lowest validation loss.
pub fn fit(spec: &NetworkSpec, config: &TrainConfig, train: &Dataset, val: &Dataset) -> Result<(ModelWeights, FitReport)> {
    spec.validate()?;
    config.validate()?;
    train.check(spec, "training")?;
    val.check(spec, "validation")?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut weights = ModelWeights::init(spec, config.seed);
    let mut best = weights.clone();
    let mut grads = ModelWeights::zeros(spec);
    let mut scratch = ModelWeights::zeros(spec);
    let mut adam = Adam::new(config.adam(), spec);
    let mut net = Network::new(spec)?;
    let mut stopper = EarlyStopping::new(config.patience);
    let mut report = FitReport { epochs_run: 0, best_epoch: 0, train_loss: Vec::new(), val_loss: Vec::new(), stopped_early: false };
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.fill(0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                epoch_loss += net.accumulate(&weights, train.sample(i), train.label(i), scale, &mut grads);
            }
            adam.step(&mut weights, &grads);
        }
        let train_loss = epoch_loss / train.len() as f64;
        let val_loss = val.mean_loss(&mut net, &weights, &mut scratch);
        if !train_loss.is_finite() || !val_loss.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(NnError::DivergenceDetected { epoch });
        }
        report.train_loss.push(train_loss);
        report.val_loss.push(val_loss);
        report.epochs_run = epoch;
        if stopper.observe(val_loss) {
            best.clone_from(&weights);
        }
        if stopper.should_stop() {
            report.stopped_early = epoch < config.max_epochs;
            break;
        }
    }
    report.best_epoch = stopper.best_epoch();
    Ok((best, report))
}

#[cfg(test)]
mod tests {
    use super::super::Head;
    use super::*;

    #[test]
    fn early_stopping_on_rising_loss() {
        let mut s = EarlyStopping::new(20);
        let mut stopped = None;
        for epoch in 1..=100 {
            s.observe(epoch as f64);
            if s.should_stop() {
                stopped = Some(epoch);
                break;
            }
        }
        assert_eq!(stopped, Some(21));
        assert_eq!(s.best_epoch(), 1);
    }

    #[test]
    fn config_validation() {
        let c = TrainConfig::default();
        c.validate().unwrap();
        assert_eq!((c.learning_rate, c.batch_size, c.max_epochs, c.patience), (1e-4, 8, 100, 20));
        assert!(TrainConfig { val_fraction: 1.0, ..c }.validate().is_err());
        assert!(TrainConfig { patience: 101, ..c }.validate().is_err());
    }

    fn tiny() -> NetworkSpec {
        NetworkSpec::with_channels(5, 4, [4, 4, 4, 4, 4, 4, 4], Head::Binary)
    }

    fn separable(spec: &NetworkSpec) -> Dataset {
        let mut d = Dataset::new(spec.input_size());
        for i in 0..8 {
            let label = i % 2;
            let sign = if label == 1 { 1.0 } else { -1.0 };
            let x: Vec<f64> = (0..spec.input_size()).map(|j| sign * (1.0 + 0.1 * ((i + j) % 3) as f64)).collect();
            d.push(&x, label);
        }
        d
    }

    #[test]
    fn empty_sets_rejected() {
        let spec = tiny();
        let d = separable(&spec);
        let e = Dataset::new(spec.input_size());
        assert!(matches!(fit(&spec, &TrainConfig::default(), &e, &d), Err(NnError::EmptySet("training"))));
        assert!(matches!(fit(&spec, &TrainConfig::default(), &d, &e), Err(NnError::EmptySet("validation"))));
    }

    #[test]
    fn returns_best_epoch_weights_deterministically() {
        let spec = tiny();
        let d = separable(&spec);
        let cfg = TrainConfig { learning_rate: 0.01, max_epochs: 30, patience: 5, seed: 3, ..Default::default() };
        let (w, r) = fit(&spec, &cfg, &d, &d).unwrap();
        let (w2, r2) = fit(&spec, &cfg, &d, &d).unwrap();
        assert_eq!(w, w2);
        assert_eq!(r, r2);
        let best = r.val_loss.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(r.val_loss[r.best_epoch - 1], best);
        let mut net = Network::new(&spec).unwrap();
        let mut scratch = ModelWeights::zeros(&spec);
        assert!((d.mean_loss(&mut net, &w, &mut scratch) - best).abs() < 1e-12);
    }

    #[test]
    fn divergence_is_reported() {
        let spec = tiny();
        let d = separable(&spec);
        let cfg = TrainConfig { learning_rate: 1e300, max_epochs: 5, patience: 5, ..Default::default() };
        assert!(matches!(fit(&spec, &cfg, &d, &d), Err(NnError::DivergenceDetected { .. })));
    }
}
