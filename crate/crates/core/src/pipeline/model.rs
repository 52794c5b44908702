// SPDX-License-Identifier: Apache-2.0

use crate::devices::NeuronModel;

/// Weights of one fully connected layer, normalized to [-1, 1].
///
/// With a bias line the matrix has `inputs + 1` rows, the last row being the
/// weights of an input that is always driven at `v_dd`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub inputs: usize,
    pub outputs: usize,
    pub bias: bool,
    /// Row-major `(inputs + bias) × outputs`.
    pub weights: Vec<f32>,
    /// Multiplier that restores trained weights: `W = scale · w`.
    pub scale: f64,
}

impl LayerWeights {
    pub fn rows(&self) -> usize {
        self.inputs + usize::from(self.bias)
    }

    pub fn weights_f64(&self) -> Vec<f64> {
        self.weights.iter().map(|&w| f64::from(w)).collect()
    }

    /// Build from unnormalized weights by per-layer max-abs scaling.
    pub fn from_trained(inputs: usize, outputs: usize, bias: bool, trained: &[f64]) -> Self {
        let max = trained.iter().fold(0.0f64, |a, w| a.max(w.abs()));
        let scale = if max > 0.0 { max } else { 1.0 };
        let weights = trained
            .iter()
            .map(|&w| ((w / scale) as f32).clamp(-1.0, 1.0))
            .collect();
        Self {
            inputs,
            outputs,
            bias,
            weights,
            scale,
        }
    }

    /// Ideal pre-activation voltages `Σ_k v_k · W_kj`.
    pub fn preactivation(&self, inputs: &[f64], v_dd: f64) -> Vec<f64> {
        let mut z = vec![0.0; self.outputs];
        let drive = inputs.iter().copied().chain(self.bias.then_some(v_dd));
        for (k, v) in drive.enumerate() {
            if v == 0.0 {
                continue;
            }
            let row = &self.weights[k * self.outputs..(k + 1) * self.outputs];
            for (zj, &w) in z.iter_mut().zip(row) {
                *zj += v * f64::from(w);
            }
        }
        z.iter_mut().for_each(|zj| *zj *= self.scale);
        z
    }
}

/// A fully connected network deployed as chained analog layers.
#[derive(Debug, Clone, PartialEq)]
pub struct DnnModel {
    pub layer_dims: Vec<usize>,
    pub layers: Vec<LayerWeights>,
}

impl DnnModel {
    pub fn validate(&self) -> Result<(), String> {
        if self.layer_dims.len() != self.layers.len() + 1 {
            return Err(format!(
                "{} layer dims describe {} layers, model has {}",
                self.layer_dims.len(),
                self.layer_dims.len().saturating_sub(1),
                self.layers.len()
            ));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.inputs != self.layer_dims[l] || layer.outputs != self.layer_dims[l + 1] {
                return Err(format!(
                    "layer {l} is {}x{}, dims say {}x{}",
                    layer.inputs,
                    layer.outputs,
                    self.layer_dims[l],
                    self.layer_dims[l + 1]
                ));
            }
            if layer.weights.len() != layer.rows() * layer.outputs {
                return Err(format!(
                    "layer {l} has {} weights, expected {}",
                    layer.weights.len(),
                    layer.rows() * layer.outputs
                ));
            }
            if layer.weights.iter().any(|w| !(w.abs() <= 1.0)) {
                return Err(format!("layer {l} has weights outside [-1, 1]"));
            }
            if !(layer.scale > 0.0 && layer.scale.is_finite()) {
                return Err(format!("layer {l} has invalid scale {}", layer.scale));
            }
        }
        Ok(())
    }

    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.inputs, l.outputs)).collect()
    }

    /// Software forward pass with the same neuron transfer as the hardware.
    /// Returns the activations of every layer, input voltages first.
    pub fn reference_activations(&self, inputs: &[f64], neuron: &NeuronModel) -> Vec<Vec<f64>> {
        let mut acts = vec![inputs.to_vec()];
        for layer in &self.layers {
            let z = layer.preactivation(acts.last().unwrap(), neuron.v_dd);
            acts.push(z.into_iter().map(|v| neuron.activate(v)).collect());
        }
        acts
    }

    pub fn reference_classify(&self, inputs: &[f64], neuron: &NeuronModel) -> usize {
        argmax(self.reference_activations(inputs, neuron).last().unwrap())
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_round_trips_scale() {
        let l = LayerWeights::from_trained(1, 2, true, &[2.0, -4.0, 1.0, 0.5]);
        assert_eq!(l.scale, 4.0);
        assert_eq!(l.weights, vec![0.5, -1.0, 0.25, 0.125]);
        let z = l.preactivation(&[0.5], 0.8);
        assert!((z[0] - (0.5 * 2.0 + 0.8 * 1.0)).abs() < 1e-12);
        assert!((z[1] - (0.5 * -4.0 + 0.8 * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.1, 0.3, 0.3]), 1);
        assert_eq!(argmax(&[0.0; 10]), 0);
    }

    #[test]
    fn validation_catches_shape_errors() {
        let l = LayerWeights::from_trained(2, 1, false, &[1.0, 1.0]);
        let ok = DnnModel { layer_dims: vec![2, 1], layers: vec![l.clone()] };
        assert!(ok.validate().is_ok());
        let bad = DnnModel { layer_dims: vec![3, 1], layers: vec![l] };
        assert!(bad.validate().is_err());
    }
}
