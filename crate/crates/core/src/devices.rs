// SPDX-License-Identifier: Apache-2.0

//! Behavioural device models: differential synapse conductances, current
//! sensing, the inverting sigmoid neuron and pixel-to-voltage encoding.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviceError {
    #[error("weight {value} at ({row}, {col}) is outside [-1, 1]")]
    WeightRange { row: usize, col: usize, value: f64 },
    #[error("pixel value {0} is outside [0, 1]")]
    PixelRange(f64),
    #[error("invalid device parameter: {0}")]
    Invalid(String),
}

/// Programmable conductance window of one memristive device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConductanceRange {
    pub g_min: f64,
    pub g_max: f64,
    /// Number of programmable levels; `None` means continuous.
    #[serde(default)]
    pub levels: Option<u32>,
}

impl Default for ConductanceRange {
    fn default() -> Self {
        Self {
            g_min: 1e-6,
            g_max: 100e-6,
            levels: None,
        }
    }
}

impl ConductanceRange {
    pub fn span(&self) -> f64 {
        self.g_max - self.g_min
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        if !(self.g_min > 0.0 && self.g_min < self.g_max && self.g_max.is_finite()) {
            return Err(DeviceError::Invalid(format!(
                "conductance range requires 0 < g_min < g_max, got [{}, {}]",
                self.g_min, self.g_max
            )));
        }
        if let Some(l) = self.levels {
            if l < 2 {
                return Err(DeviceError::Invalid(format!(
                    "discrete conductance needs at least 2 levels, got {l}"
                )));
            }
        }
        Ok(())
    }

    /// Conductance for a magnitude in [0, 1], snapped to a level if discrete.
    fn program(&self, magnitude: f64) -> f64 {
        let t = match self.levels {
            None => magnitude,
            Some(l) => {
                let steps = f64::from(l - 1);
                (magnitude * steps).round() / steps
            }
        };
        self.g_min + t * self.span()
    }
}

/// A differential pair of devices encoding one signed weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynapseCell {
    pub g_pos: f64,
    pub g_neg: f64,
}

impl SynapseCell {
    pub fn differential(&self) -> f64 {
        self.g_pos - self.g_neg
    }
}

pub fn map_weight(w: f64, range: &ConductanceRange) -> SynapseCell {
    let g = range.program(w.abs());
    if w >= 0.0 {
        SynapseCell {
            g_pos: g,
            g_neg: range.g_min,
        }
    } else {
        SynapseCell {
            g_pos: range.g_min,
            g_neg: g,
        }
    }
}

/// Map a row-major `rows × cols` matrix of normalized weights onto synapse
/// pairs. The positive device carries `w ≥ 0`, the negative device `w < 0`;
/// the idle device sits at `g_min`.
pub fn map_weights_to_conductances(
    weights: &[f64],
    cols: usize,
    range: &ConductanceRange,
) -> Result<Vec<SynapseCell>, DeviceError> {
    range.validate()?;
    weights
        .iter()
        .enumerate()
        .map(|(idx, &w)| {
            if !(w.abs() <= 1.0) {
                return Err(DeviceError::WeightRange {
                    row: idx / cols.max(1),
                    col: idx % cols.max(1),
                    value: w,
                });
            }
            Ok(map_weight(w, range))
        })
        .collect()
}

/// Ideal unity-gain differential current sensing.
pub fn diff_sense(i_pos: f64, i_neg: f64) -> f64 {
    i_pos - i_neg
}

pub fn diff_sense_all(i_pos: &[f64], i_neg: &[f64]) -> Vec<f64> {
    i_pos
        .iter()
        .zip(i_neg)
        .map(|(&p, &n)| diff_sense(p, n))
        .collect()
}

/// Supply rails of the analog neurons and input drivers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupplyRails {
    pub v_dd: f64,
    pub v_ss: f64,
}

impl Default for SupplyRails {
    fn default() -> Self {
        Self {
            v_dd: 0.8,
            v_ss: -0.8,
        }
    }
}

/// Inverting sigmoid neuron: transimpedance front end followed by a logistic
/// high-to-low transition between the rails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeuronModel {
    pub v_dd: f64,
    pub v_ss: f64,
    /// Ω
    pub transimpedance: f64,
    /// 1/V
    pub gain_k: f64,
    /// V
    pub midpoint_vm: f64,
}

impl Default for NeuronModel {
    fn default() -> Self {
        let rails = SupplyRails::default();
        Self {
            v_dd: rails.v_dd,
            v_ss: rails.v_ss,
            transimpedance: 1e3,
            gain_k: 2.0,
            midpoint_vm: 0.0,
        }
    }
}

impl NeuronModel {
    pub fn validate(&self) -> Result<(), DeviceError> {
        if !(self.v_ss < self.v_dd) {
            return Err(DeviceError::Invalid(format!(
                "neuron rails need v_ss < v_dd, got {} / {}",
                self.v_ss, self.v_dd
            )));
        }
        if !(self.transimpedance > 0.0) || !(self.gain_k > 0.0) {
            return Err(DeviceError::Invalid(
                "neuron transimpedance and gain must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn rails(&self) -> SupplyRails {
        SupplyRails {
            v_dd: self.v_dd,
            v_ss: self.v_ss,
        }
    }

    pub fn with_transimpedance(self, transimpedance: f64) -> Self {
        Self {
            transimpedance,
            ..self
        }
    }

    /// Output voltage for a sensed input voltage.
    pub fn activate(&self, v_in: f64) -> f64 {
        self.v_ss + (self.v_dd - self.v_ss) * logistic(-self.gain_k * (v_in - self.midpoint_vm))
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn neuron_transfer(i_in: f64, model: &NeuronModel) -> f64 {
    model.activate(i_in * model.transimpedance)
}

pub fn encode_input(pixel: f64, rails: &SupplyRails, scale: f64) -> Result<f64, DeviceError> {
    if !(0.0..=1.0).contains(&pixel) {
        return Err(DeviceError::PixelRange(pixel));
    }
    Ok(pixel * scale * rails.v_dd)
}
