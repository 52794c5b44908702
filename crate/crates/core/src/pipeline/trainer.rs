// SPDX-License-Identifier: Apache-2.0

//! Minimal float trainer for the deployed MLP.
//!
//! Activations live in the voltage domain and use exactly the neuron transfer
//! of the hardware, `a = v_ss + (v_dd - v_ss)·σ(-k(z - v_m))`, so a trained
//! model needs no conversion beyond weight normalization. The loss is
//! per-output binary cross-entropy on the normalized neuron output
//! `p = (a - v_ss)/(v_dd - v_ss)` against one-hot targets; prediction is the
//! argmax of the output voltages.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{DnnModel, LayerWeights, SimConfig};
use crate::devices::{logistic, NeuronModel};
use crate::shell::mnist::Dataset;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("training input error: {0}")]
    Input(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Drive an extra always-on input at `v_dd` in every layer.
    pub bias: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 15,
            learning_rate: 0.05,
            batch_size: 32,
            seed: 1,
            bias: true,
        }
    }
}

/// Unnormalized float network. `weights[l]` is `(n_l + bias) × n_{l+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatMlp {
    pub weights: Vec<Array2<f64>>,
    pub bias: bool,
}

/// Forward state of one minibatch.
struct Trace {
    /// Inputs of each layer with the bias column appended.
    inputs: Vec<Array2<f64>>,
    /// Normalized neuron outputs σ(-k(z - v_m)) per layer.
    probs: Vec<Array2<f64>>,
}

impl FloatMlp {
    pub fn init(layer_dims: &[usize], bias: bool, rng: &mut impl Rng) -> Self {
        let weights = layer_dims
            .windows(2)
            .map(|d| {
                let (n, m) = (d[0], d[1]);
                let bound = (6.0 / (n + m) as f64).sqrt();
                Array2::from_shape_fn((n + usize::from(bias), m), |_| rng.random_range(-bound..bound))
            })
            .collect();
        Self { weights, bias }
    }

    fn with_bias(&self, x: ArrayView2<f64>, v_dd: f64) -> Array2<f64> {
        if !self.bias {
            return x.to_owned();
        }
        let mut out = Array2::from_elem((x.nrows(), x.ncols() + 1), v_dd);
        out.slice_mut(s![.., ..x.ncols()]).assign(&x);
        out
    }

    fn trace(&self, x: ArrayView2<f64>, neuron: &NeuronModel) -> Trace {
        let swing = neuron.v_dd - neuron.v_ss;
        let mut inputs = Vec::with_capacity(self.weights.len());
        let mut probs = Vec::with_capacity(self.weights.len());
        let mut a = x.to_owned();
        for w in &self.weights {
            let inp = self.with_bias(a.view(), neuron.v_dd);
            let z = inp.dot(w);
            let p = z.mapv(|z| logistic(-neuron.gain_k * (z - neuron.midpoint_vm)));
            a = p.mapv(|p| neuron.v_ss + swing * p);
            inputs.push(inp);
            probs.push(p);
        }
        Trace { inputs, probs }
    }

    /// Output voltages for a batch of input voltage rows.
    pub fn forward(&self, x: ArrayView2<f64>, neuron: &NeuronModel) -> Array2<f64> {
        let swing = neuron.v_dd - neuron.v_ss;
        self.trace(x, neuron).probs.pop().unwrap().mapv(|p| neuron.v_ss + swing * p)
    }

    /// Mean per-sample loss and its gradient with respect to every weight.
    pub fn loss_and_gradients(
        &self,
        x: ArrayView2<f64>,
        labels: &[u8],
        neuron: &NeuronModel,
    ) -> (f64, Vec<Array2<f64>>) {
        let batch = x.nrows() as f64;
        let t = self.trace(x, neuron);
        let out = t.probs.last().unwrap();
        let mut target = Array2::<f64>::zeros(out.raw_dim());
        for (r, &l) in labels.iter().enumerate() {
            target[[r, usize::from(l)]] = 1.0;
        }
        let eps = 1e-12;
        let loss = out
            .iter()
            .zip(target.iter())
            .map(|(&p, &y)| -(y * (p + eps).ln() + (1.0 - y) * (1.0 - p + eps).ln()))
            .sum::<f64>()
            / batch;

        let k = neuron.gain_k;
        let swing = neuron.v_dd - neuron.v_ss;
        // dL/dz at the output: d/du BCE = p - y with u = -k(z - v_m).
        let mut delta = (out - &target) * (-k / batch);
        let mut grads = vec![Array2::zeros((0, 0)); self.weights.len()];
        for l in (0..self.weights.len()).rev() {
            grads[l] = t.inputs[l].t().dot(&delta);
            if l == 0 {
                break;
            }
            let n = self.weights[l].nrows() - usize::from(self.bias);
            let da = delta.dot(&self.weights[l].slice(s![..n, ..]).t());
            let p = &t.probs[l - 1];
            delta = da * &p.mapv(|p| -k * swing * p * (1.0 - p));
        }
        (loss, grads)
    }

    pub fn to_model(&self, layer_dims: &[usize]) -> DnnModel {
        let layers = self
            .weights
            .iter()
            .zip(layer_dims.windows(2))
            .map(|(w, d)| {
                let flat: Vec<f64> = w.iter().copied().collect();
                LayerWeights::from_trained(d[0], d[1], self.bias, &flat)
            })
            .collect();
        DnnModel {
            layer_dims: layer_dims.to_vec(),
            layers,
        }
    }
}

/// Input voltage matrix for a dataset, one image per row.
pub fn input_matrix(data: &Dataset, config: &SimConfig) -> Array2<f64> {
    let cols = data.rows * data.cols;
    let gain = config.encode_scale * config.neuron.v_dd;
    Array2::from_shape_fn((data.len(), cols), |(r, c)| f64::from(data.image(r)[c]) * gain)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub initial_loss: f64,
    pub epoch_losses: Vec<f64>,
}

pub fn train_float(
    data: &Dataset,
    layer_dims: &[usize],
    train: &TrainConfig,
    config: &SimConfig,
) -> Result<(FloatMlp, TrainLog), TrainError> {
    if data.is_empty() {
        return Err(TrainError::Input("empty training set".into()));
    }
    if layer_dims.first() != Some(&(data.rows * data.cols)) {
        return Err(TrainError::Input(format!(
            "first layer expects {:?} inputs, images have {}",
            layer_dims.first(),
            data.rows * data.cols
        )));
    }
    if train.batch_size == 0 {
        return Err(TrainError::Input("batch size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed);
    let mut net = FloatMlp::init(layer_dims, train.bias, &mut rng);
    let x = input_matrix(data, config);
    let neuron = &config.neuron;

    let full_loss = |net: &FloatMlp| -> f64 {
        let mut total = 0.0;
        for start in (0..data.len()).step_by(1024) {
            let end = (start + 1024).min(data.len());
            let (l, _) = net.loss_and_gradients(x.slice(s![start..end, ..]), &data.labels[start..end], neuron);
            total += l * (end - start) as f64;
        }
        total / data.len() as f64
    };
    let initial_loss = full_loss(&net);

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(train.epochs);
    for epoch in 0..train.epochs {
        order.shuffle(&mut rng);
        let mut running = 0.0;
        for chunk in order.chunks(train.batch_size) {
            let xb = x.select(Axis(0), chunk);
            let yb: Vec<u8> = chunk.iter().map(|&i| data.labels[i]).collect();
            let (loss, grads) = net.loss_and_gradients(xb.view(), &yb, neuron);
            if !loss.is_finite() {
                return Err(TrainError::Diverged { epoch, loss });
            }
            running += loss * chunk.len() as f64;
            for (w, g) in net.weights.iter_mut().zip(&grads) {
                w.scaled_add(-train.learning_rate, g);
            }
        }
        let epoch_loss = running / data.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(TrainError::Diverged { epoch, loss: epoch_loss });
        }
        epoch_losses.push(epoch_loss);
    }
    Ok((
        net,
        TrainLog {
            initial_loss,
            epoch_losses,
        },
    ))
}

/// Train the float network and normalize it for deployment.
pub fn train_reference_mlp(
    data: &Dataset,
    layer_dims: &[usize],
    train: &TrainConfig,
    config: &SimConfig,
) -> Result<(DnnModel, TrainLog), TrainError> {
    let (net, log) = train_float(data, layer_dims, train, config)?;
    Ok((net.to_model(layer_dims), log))
}

/// Fraction of rows whose output argmax matches the label.
pub fn float_accuracy(net: &FloatMlp, data: &Dataset, config: &SimConfig) -> f64 {
    let x = input_matrix(data, config);
    let out = net.forward(x.view(), &config.neuron);
    let correct = out
        .outer_iter()
        .zip(&data.labels)
        .filter(|(row, &l)| {
            let v: Array1<f64> = row.to_owned();
            super::argmax(v.as_slice().unwrap()) == usize::from(l)
        })
        .count();
    correct as f64 / data.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_data(count: usize, side: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<u8> = (0..count).map(|k| (k % 3) as u8).collect();
        let pixels = labels
            .iter()
            .flat_map(|&l| {
                let mut img: Vec<f32> = (0..side * side).map(|_| rng.random_range(0.0..0.2)).collect();
                img[usize::from(l)] = 1.0;
                img
            })
            .collect();
        Dataset {
            rows: side,
            cols: side,
            pixels,
            labels,
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let cfg = SimConfig::default();
        let data = toy_data(6, 2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = FloatMlp::init(&[4, 5, 3], true, &mut rng);
        let x = input_matrix(&data, &cfg);
        let (_, grads) = net.loss_and_gradients(x.view(), &data.labels, &cfg.neuron);
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for l in 0..net.weights.len() {
            for idx in 0..net.weights[l].len() {
                let (r, c) = (idx / net.weights[l].ncols(), idx % net.weights[l].ncols());
                let mut plus = net.clone();
                plus.weights[l][[r, c]] += h;
                let mut minus = net.clone();
                minus.weights[l][[r, c]] -= h;
                let fd = (plus.loss_and_gradients(x.view(), &data.labels, &cfg.neuron).0
                    - minus.loss_and_gradients(x.view(), &data.labels, &cfg.neuron).0)
                    / (2.0 * h);
                let g = grads[l][[r, c]];
                worst = worst.max((g - fd).abs() / g.abs().max(1e-3));
            }
        }
        assert!(worst <= 1e-5, "worst relative error {worst}");
    }

    #[test]
    fn training_is_deterministic_and_learns() {
        let cfg = SimConfig::default();
        let data = toy_data(60, 3, 5);
        let train = TrainConfig { epochs: 3, batch_size: 8, ..Default::default() };
        let (a, log) = train_reference_mlp(&data, &[9, 6, 3], &train, &cfg).unwrap();
        let (b, _) = train_reference_mlp(&data, &[9, 6, 3], &train, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(log.epoch_losses[0] < log.initial_loss);
        a.validate().unwrap();
    }

    #[test]
    fn rejects_mismatched_input() {
        let data = toy_data(4, 2, 1);
        let err = train_reference_mlp(&data, &[5, 3], &TrainConfig::default(), &SimConfig::default());
        assert!(matches!(err, Err(TrainError::Input(_))));
    }
}
