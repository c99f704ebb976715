use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::engine::Network;
use super::{loss_and_grad, Head, ModelWeights, NetworkSpec, Result};

/// Central-difference step.
pub const STEP: f64 = 1e-4;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub configurations: usize,
    pub parameters_checked: usize,
    /// Parameters whose perturbation moved a rectified unit across zero.
    pub skipped_kinks: usize,
    pub max_relative_error: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.parameters_checked > 0 && self.max_relative_error <= tolerance
    }

    fn merge(&mut self, other: &GradCheckReport) {
        self.configurations += other.configurations;
        self.parameters_checked += other.parameters_checked;
        self.skipped_kinks += other.skipped_kinks;
        self.max_relative_error = self.max_relative_error.max(other.max_relative_error);
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn batch_loss_and_mask(net: &mut Network, weights: &ModelWeights, batch: &[f64], labels: &[usize], scratch: &mut ModelWeights) -> (f64, Vec<bool>) {
    let n = net.spec().input_size();
    let mut loss = 0.0;
    let mut mask = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        loss += net.accumulate(weights, &batch[i * n..(i + 1) * n], l, 0.0, scratch);
        mask.extend(net.active_mask());
    }
    (loss / labels.len() as f64, mask)
}

/// Compares the analytic gradient of every parameter with a central finite
/// difference of the batch loss.
pub fn check_gradients(spec: &NetworkSpec, weights: &ModelWeights, batch: &[f64], labels: &[usize]) -> Result<GradCheckReport> {
    let (_, analytic) = loss_and_grad(weights, spec, batch, labels)?;
    let mut net = Network::new(spec)?;
    let mut scratch = ModelWeights::zeros(spec);
    let (_, base_mask) = batch_loss_and_mask(&mut net, weights, batch, labels, &mut scratch);
    let mut w = weights.clone();
    let mut report = GradCheckReport { configurations: 1, ..Default::default() };
    for p in 0..w.len() {
        let orig = w.get(p);
        w.set(p, orig + STEP);
        let (up, up_mask) = batch_loss_and_mask(&mut net, &w, batch, labels, &mut scratch);
        w.set(p, orig - STEP);
        let (down, down_mask) = batch_loss_and_mask(&mut net, &w, batch, labels, &mut scratch);
        w.set(p, orig);
        if up_mask != base_mask || down_mask != base_mask {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * STEP);
        report.parameters_checked += 1;
        report.max_relative_error = report.max_relative_error.max(relative_error(analytic.get(p), numeric));
    }
    Ok(report)
}

/// A random network of the handover shape family: six conv layers, a dense
/// layer and either head, with small random widths.
pub fn random_spec(rng: &mut impl Rng) -> NetworkSpec {
    let mut sizes = [0usize; 7];
    for s in &mut sizes {
        *s = rng.random_range(2..=6);
    }
    let head = if rng.random_bool(0.5) { Head::Binary } else { Head::ThreeWay };
    NetworkSpec::with_channels(5, rng.random_range(3..=8), sizes, head)
}

/// Runs `configurations` seeded random checks: random spec, initialized
/// weights with perturbed biases, and a random batch of 1 to 4 samples.
pub fn gradient_check(seed: u64, configurations: usize) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = GradCheckReport::default();
    for _ in 0..configurations {
        let spec = random_spec(&mut rng);
        let mut weights = ModelWeights::init(&spec, rng.random());
        for t in weights.tensors.iter_mut().filter(|t| t.name.ends_with(".bias")) {
            for v in &mut t.data {
                *v = rng.random_range(-0.1..0.1);
            }
        }
        let b = rng.random_range(1..=4);
        let batch: Vec<f64> = (0..b * spec.input_size()).map(|_| rng.sample(StandardNormal)).collect();
        let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..spec.head.classes())).collect();
        total.merge(&check_gradients(&spec, &weights, &batch, &labels)?);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_nets_match_finite_differences() {
        let r = gradient_check(11, 4).unwrap();
        assert_eq!(r.configurations, 4);
        assert!(r.passes(1e-4), "{r:?}");
        assert!(r.parameters_checked > r.skipped_kinks);
    }

    #[test]
    fn tanh_net_has_no_kinks() {
        let mut spec = NetworkSpec::with_channels(5, 3, [3, 3, 3, 4, 4, 4, 3], Head::ThreeWay);
        for c in &mut spec.conv {
            c.activation = super::super::Activation::Tanh;
        }
        spec.dense.activation = super::super::Activation::Tanh;
        let w = ModelWeights::init(&spec, 2);
        let batch: Vec<f64> = (0..2 * spec.input_size()).map(|i| (i as f64 * 0.7).cos()).collect();
        let r = check_gradients(&spec, &w, &batch, &[0, 2]).unwrap();
        assert_eq!(r.skipped_kinks, 0);
        assert_eq!(r.parameters_checked, spec.parameter_count());
        assert!(r.passes(1e-4), "{r:?}");
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-9, 0.0) - 0.1).abs() < 1e-12);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-12);
    }
}
