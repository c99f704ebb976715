use super::{Activation, Head, ModelWeights, NetworkSpec, NnError, Result};

const DENSE_W: usize = 2 * super::CONV_DEPTH;
const DENSE_B: usize = DENSE_W + 1;
const OUT_W: usize = DENSE_W + 2;
const OUT_B: usize = DENSE_W + 3;

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Forward/backward workspace for one spec. Processes one sample at a time
/// and keeps every intermediate activation for the backward pass.
pub struct Network<'a> {
    spec: &'a NetworkSpec,
    shapes: Vec<(usize, usize)>,
    /// `acts[0]` is the input, `acts[l + 1]` the output of conv layer `l`.
    acts: Vec<Vec<f64>>,
    dense: Vec<f64>,
    logits: Vec<f64>,
    grad_acts: Vec<Vec<f64>>,
    grad_dense: Vec<f64>,
    grad_logits: Vec<f64>,
}

impl<'a> Network<'a> {
    pub fn new(spec: &'a NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.conv_shapes();
        let acts: Vec<Vec<f64>> = shapes.iter().map(|&(l, c)| vec![0.0; l * c]).collect();
        let k = spec.head.units();
        Ok(Self {
            spec,
            grad_acts: acts.clone(),
            acts,
            shapes,
            dense: vec![0.0; spec.dense.units],
            logits: vec![0.0; k],
            grad_dense: vec![0.0; spec.dense.units],
            grad_logits: vec![0.0; k],
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        self.spec
    }

    /// Runs one sample and returns the output logits.
    pub fn run(&mut self, weights: &ModelWeights, input: &[f64]) -> &[f64] {
        let spec = self.spec;
        self.acts[0].copy_from_slice(input);
        for (l, conv) in spec.conv.iter().enumerate() {
            let (in_len, in_ch) = self.shapes[l];
            let (out_len, out_ch) = self.shapes[l + 1];
            let w = &weights.tensors[2 * l].data;
            let b = &weights.tensors[2 * l + 1].data;
            let (lower, upper) = self.acts.split_at_mut(l + 1);
            let x = &lower[l];
            let y = &mut upper[0];
            for t in 0..out_len {
                for o in 0..out_ch {
                    let mut s = b[o];
                    for k in 0..conv.kernel {
                        let pos = (t * conv.stride + k) as isize - conv.padding as isize;
                        if pos < 0 || pos as usize >= in_len {
                            continue;
                        }
                        let xr = &x[pos as usize * in_ch..(pos as usize + 1) * in_ch];
                        let wr = &w[(o * conv.kernel + k) * in_ch..(o * conv.kernel + k + 1) * in_ch];
                        s += xr.iter().zip(wr).map(|(a, b)| a * b).sum::<f64>();
                    }
                    y[t * out_ch + o] = conv.activation.apply(s);
                }
            }
        }

        let flat = &self.acts[spec.conv.len()];
        let dw = &weights.tensors[DENSE_W].data;
        let db = &weights.tensors[DENSE_B].data;
        for (u, out) in self.dense.iter_mut().enumerate() {
            let row = &dw[u * flat.len()..(u + 1) * flat.len()];
            let s = db[u] + row.iter().zip(flat).map(|(a, b)| a * b).sum::<f64>();
            *out = spec.dense.activation.apply(s);
        }

        let ow = &weights.tensors[OUT_W].data;
        let ob = &weights.tensors[OUT_B].data;
        let units = self.dense.len();
        for (k, z) in self.logits.iter_mut().enumerate() {
            *z = ob[k] + ow[k * units..(k + 1) * units].iter().zip(&self.dense).map(|(a, b)| a * b).sum::<f64>();
        }
        &self.logits
    }

    /// Output probabilities for one sample: one sigmoid value, or three softmax values.
    pub fn probabilities(&mut self, weights: &ModelWeights, input: &[f64], out: &mut [f64]) {
        self.run(weights, input);
        probabilities_from_logits(self.spec.head, &self.logits, out);
    }

    /// Forward plus backward for one labelled sample. Adds `scale * dloss/dparam`
    /// into `grads` and returns the sample's cross-entropy.
    pub fn accumulate(&mut self, weights: &ModelWeights, input: &[f64], label: usize, scale: f64, grads: &mut ModelWeights) -> f64 {
        self.run(weights, input);
        let spec = self.spec;
        let loss = match spec.head {
            Head::Binary => {
                let z = self.logits[0];
                let y = (label == 1) as u8 as f64;
                self.grad_logits[0] = sigmoid(z) - y;
                z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
            }
            Head::ThreeWay => {
                let m = self.logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = self.logits.iter().map(|z| (z - m).exp()).sum();
                for (k, g) in self.grad_logits.iter_mut().enumerate() {
                    *g = (self.logits[k] - m).exp() / sum - (k == label) as u8 as f64;
                }
                -(self.logits[label] - m - sum.ln())
            }
        };

        // Output layer.
        let units = self.dense.len();
        let ow = &weights.tensors[OUT_W].data;
        self.grad_dense.iter_mut().for_each(|g| *g = 0.0);
        for (k, &gz) in self.grad_logits.iter().enumerate() {
            let gz = gz * scale;
            grads.tensors[OUT_B].data[k] += gz;
            let gw = &mut grads.tensors[OUT_W].data[k * units..(k + 1) * units];
            for u in 0..units {
                gw[u] += gz * self.dense[u];
                self.grad_dense[u] += gz * ow[k * units + u];
            }
        }
        for (g, &a) in self.grad_dense.iter_mut().zip(&self.dense) {
            *g *= spec.dense.activation.derivative(a);
        }

        // Dense layer into the flattened conv output.
        let top = spec.conv.len();
        let flat_len = self.acts[top].len();
        let dw = &weights.tensors[DENSE_W].data;
        self.grad_acts[top].iter_mut().for_each(|g| *g = 0.0);
        for (u, &gu) in self.grad_dense.iter().enumerate() {
            if gu == 0.0 {
                continue;
            }
            grads.tensors[DENSE_B].data[u] += gu;
            let gw = &mut grads.tensors[DENSE_W].data[u * flat_len..(u + 1) * flat_len];
            let row = &dw[u * flat_len..(u + 1) * flat_len];
            let flat = &self.acts[top];
            let gflat = &mut self.grad_acts[top];
            for f in 0..flat_len {
                gw[f] += gu * flat[f];
                gflat[f] += gu * row[f];
            }
        }

        // Conv layers, top down. grad_acts[l + 1] holds dL/d(output of layer l).
        for l in (0..top).rev() {
            let conv = spec.conv[l];
            let (in_len, in_ch) = self.shapes[l];
            let (out_len, out_ch) = self.shapes[l + 1];
            let (glower, gupper) = self.grad_acts.split_at_mut(l + 1);
            let gout = &mut gupper[0];
            for (g, &a) in gout.iter_mut().zip(&self.acts[l + 1]) {
                *g *= conv.activation.derivative(a);
            }
            let gin = &mut glower[l];
            let want_input_grad = l > 0;
            if want_input_grad {
                gin.iter_mut().for_each(|g| *g = 0.0);
            }
            let x = &self.acts[l];
            let w = &weights.tensors[2 * l].data;
            let (gw_t, rest) = grads.tensors.split_at_mut(2 * l + 1);
            let gw = &mut gw_t[2 * l].data;
            let gb = &mut rest[0].data;
            for t in 0..out_len {
                for o in 0..out_ch {
                    let g = gout[t * out_ch + o];
                    if g == 0.0 {
                        continue;
                    }
                    gb[o] += g;
                    for k in 0..conv.kernel {
                        let pos = (t * conv.stride + k) as isize - conv.padding as isize;
                        if pos < 0 || pos as usize >= in_len {
                            continue;
                        }
                        let p = pos as usize;
                        let base = (o * conv.kernel + k) * in_ch;
                        let xr = &x[p * in_ch..(p + 1) * in_ch];
                        let gwr = &mut gw[base..base + in_ch];
                        for (gwv, xv) in gwr.iter_mut().zip(xr) {
                            *gwv += g * xv;
                        }
                        if want_input_grad {
                            let wr = &w[base..base + in_ch];
                            let gir = &mut gin[p * in_ch..(p + 1) * in_ch];
                            for (giv, wv) in gir.iter_mut().zip(wr) {
                                *giv += g * wv;
                            }
                        }
                    }
                }
            }
        }
        loss
    }

    /// Sign pattern of every rectified unit from the last `run`.
    pub(crate) fn active_mask(&self) -> Vec<bool> {
        let mut mask = Vec::new();
        for (l, conv) in self.spec.conv.iter().enumerate() {
            if conv.activation == Activation::Relu {
                mask.extend(self.acts[l + 1].iter().map(|&a| a > 0.0));
            }
        }
        if self.spec.dense.activation == Activation::Relu {
            mask.extend(self.dense.iter().map(|&a| a > 0.0));
        }
        mask
    }
}

pub(crate) fn probabilities_from_logits(head: Head, logits: &[f64], out: &mut [f64]) {
    match head {
        Head::Binary => out[0] = sigmoid(logits[0]),
        Head::ThreeWay => {
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (o, z) in out.iter_mut().zip(logits) {
                *o = (z - m).exp();
                sum += *o;
            }
            out.iter_mut().for_each(|o| *o /= sum);
        }
    }
}

fn check_batch(weights: &ModelWeights, spec: &NetworkSpec, batch: &[f64]) -> Result<usize> {
    weights.check(spec)?;
    let n = spec.input_size();
    if batch.is_empty() || !batch.len().is_multiple_of(n) {
        return Err(NnError::ShapeMismatch(format!("batch of {} values is not a multiple of {n}", batch.len())));
    }
    if batch.iter().any(|v| !v.is_finite()) {
        return Err(NnError::NonFiniteInput);
    }
    Ok(batch.len() / n)
}

/// Probabilities for a flat batch of `B x input_len x input_channels` values.
pub fn forward(weights: &ModelWeights, spec: &NetworkSpec, batch: &[f64]) -> Result<Vec<Vec<f64>>> {
    let b = check_batch(weights, spec, batch)?;
    let mut net = Network::new(spec)?;
    let n = spec.input_size();
    Ok((0..b)
        .map(|i| {
            let mut out = vec![0.0; spec.head.units()];
            net.probabilities(weights, &batch[i * n..(i + 1) * n], &mut out);
            out
        })
        .collect())
}

/// Mean cross-entropy over the batch and its gradient, shaped like `weights`.
pub fn loss_and_grad(weights: &ModelWeights, spec: &NetworkSpec, batch: &[f64], labels: &[usize]) -> Result<(f64, ModelWeights)> {
    let b = check_batch(weights, spec, batch)?;
    if labels.len() != b {
        return Err(NnError::ShapeMismatch(format!("{} labels for {b} samples", labels.len())));
    }
    if let Some(l) = labels.iter().find(|&&l| l >= spec.head.classes()) {
        return Err(NnError::ShapeMismatch(format!("label {l} invalid for {} head", spec.head)));
    }
    let mut net = Network::new(spec)?;
    let mut grads = ModelWeights::zeros(spec);
    let n = spec.input_size();
    let scale = 1.0 / b as f64;
    let mut loss = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        loss += net.accumulate(weights, &batch[i * n..(i + 1) * n], label, scale, &mut grads);
    }
    Ok((loss * scale, grads))
}

/// Class decision: `p > 0.5` for the binary head, first maximum for three-way.
pub fn predict_class(head: Head, probs: &[f64]) -> usize {
    match head {
        Head::Binary => (probs[0] > 0.5) as usize,
        Head::ThreeWay => {
            let mut best = 0;
            for (k, &p) in probs.iter().enumerate() {
                if p > probs[best] {
                    best = k;
                }
            }
            best
        }
    }
}
