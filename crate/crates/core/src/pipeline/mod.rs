// SPDX-License-Identifier: Apache-2.0

//! End-to-end inference through partitioned analog layers.
//!
//! Each layer is tiled by its [`LayerPlan`], every tile becomes a solved
//! crossbar, horizontal partials are merged as currents, and the merged
//! currents drive the layer's neurons. The per-layer transimpedance is
//! `scale / (g_max - g_min)`, which makes the ideal-wire analog pass equal the
//! software pass on the same normalized weights.

mod model;
pub mod trainer;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crossbar::{
    worst_case_delay, CrossbarArray, CrossbarError, CrossbarNetwork, OverheadPowers, PeripheralUnits,
    SolverConfig,
};
use crate::devices::{encode_input, map_weights_to_conductances, ConductanceRange, DeviceError, NeuronModel};
use crate::parasitics::ParasiticSegment;
use crate::partitioner::{merge_partials, split_matrix, LayerPlan, PartitionPlan, PlanError};
use crate::shell::mnist::Dataset;

pub use model::{argmax, DnnModel, LayerWeights};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("layer {layer}, tile ({row}, {col}): {source}")]
    Tile {
        layer: usize,
        row: usize,
        col: usize,
        source: CrossbarError,
    },
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error("model error: {0}")]
    Model(String),
    #[error("input error: {0}")]
    Input(String),
}

/// Electrical parameters for one simulated deployment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub neuron: NeuronModel,
    pub conductance: ConductanceRange,
    /// Full-scale input voltage as a fraction of `v_dd`.
    pub encode_scale: f64,
    pub seg: ParasiticSegment,
    pub drive_source_r: f64,
    pub switch_on_r: f64,
    pub solver: SolverConfig,
    pub overheads: OverheadPowers,
    /// Amplifier input capacitance seen at the end of each line, F.
    pub c_load: f64,
    /// Sampling period against which line delays are checked, s.
    pub delay_budget: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            neuron: NeuronModel::default(),
            conductance: ConductanceRange::default(),
            encode_scale: 1.0,
            seg: ParasiticSegment::ideal(),
            drive_source_r: 0.0,
            switch_on_r: 0.0,
            solver: SolverConfig::default(),
            overheads: OverheadPowers::default(),
            c_load: 1e-15,
            delay_budget: 1e-9,
        }
    }
}

impl SimConfig {
    pub fn with_seg(self, seg: ParasiticSegment) -> Self {
        Self { seg, ..self }
    }

    pub fn encode_image(&self, pixels: &[f32]) -> Result<Vec<f64>, PipelineError> {
        let rails = self.neuron.rails();
        pixels
            .iter()
            .map(|&p| Ok(encode_input(f64::from(p), &rails, self.encode_scale)?))
            .collect()
    }
}

/// Per-image outcome of one layer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerStats {
    pub resistive_power: f64,
    pub cg_iterations: usize,
}

/// A layer with every tile's network assembled and factorized.
#[derive(Debug, Clone)]
pub struct CompiledLayer {
    /// `tiles[r][c]`: row block `r`, column block `c`.
    tiles: Vec<Vec<CrossbarNetwork>>,
    row_starts: Vec<usize>,
    col_starts: Vec<usize>,
    inputs: usize,
    outputs: usize,
    bias: bool,
    neuron: NeuronModel,
    units: PeripheralUnits,
    max_delay: f64,
    used_cells: usize,
}

impl CompiledLayer {
    pub fn new(
        layer: &LayerWeights,
        plan: &LayerPlan,
        subarray_size: usize,
        config: &SimConfig,
    ) -> Result<Self, PipelineError> {
        if plan.n != layer.inputs || plan.m != layer.outputs {
            return Err(PipelineError::Model(format!(
                "plan is {}x{} but layer is {}x{}",
                plan.n, plan.m, layer.inputs, layer.outputs
            )));
        }
        config.conductance.validate()?;
        config.neuron.validate()?;
        let rows = if layer.bias {
            plan.row_heights_with_bias(subarray_size)
        } else {
            plan.row_heights.clone()
        };
        let grid = split_matrix(&layer.weights_f64(), layer.rows(), layer.outputs, &rows, &plan.col_widths)?;

        let mut tiles = Vec::with_capacity(grid.len());
        let mut max_delay: f64 = 0.0;
        let mut amps = 0;
        for (r, band) in grid.iter().enumerate() {
            let mut row = Vec::with_capacity(band.len());
            for (c, tile) in band.iter().enumerate() {
                let tile_err = |source| PipelineError::Tile {
                    layer: 0,
                    row: r,
                    col: c,
                    source,
                };
                let cells = map_weights_to_conductances(&tile.weights, tile.cols, &config.conductance)?;
                let mut arr = CrossbarArray::new(tile.rows, tile.cols, cells, config.seg)
                    .map_err(tile_err)?
                    .with_drive_source_r(config.drive_source_r);
                arr.switch_on_r = config.switch_on_r;
                max_delay = max_delay.max(worst_case_delay(&arr, config.c_load));
                amps += tile.cols;
                row.push(CrossbarNetwork::new(&arr).map_err(tile_err)?);
            }
            tiles.push(row);
        }

        let partitioned = grid.len() * plan.col_widths.len() > 1;
        let units = PeripheralUnits {
            amps,
            neurons: layer.outputs,
            demux: if partitioned { amps } else { 0 },
            switches: if partitioned { amps } else { 0 },
        };
        let transimpedance = layer.scale / config.conductance.span();
        Ok(Self {
            tiles,
            row_starts: grid.iter().map(|b| b[0].row_start).collect(),
            col_starts: grid[0].iter().map(|t| t.col_start).collect(),
            inputs: layer.inputs,
            outputs: layer.outputs,
            bias: layer.bias,
            neuron: config.neuron.with_transimpedance(transimpedance),
            units,
            max_delay,
            used_cells: layer.rows() * layer.outputs,
        })
    }

    pub fn tile_count(&self) -> usize {
        self.tiles.iter().map(Vec::len).sum()
    }

    pub fn units(&self) -> PeripheralUnits {
        self.units
    }

    pub fn max_delay(&self) -> f64 {
        self.max_delay
    }

    pub fn used_cells(&self) -> usize {
        self.used_cells
    }

    pub fn neuron(&self) -> &NeuronModel {
        &self.neuron
    }

    /// Merged differential output currents for one input vector.
    pub fn currents(&self, inputs: &[f64], solver: &SolverConfig) -> Result<(Vec<f64>, LayerStats), PipelineError> {
        if inputs.len() != self.inputs {
            return Err(PipelineError::Input(format!(
                "layer expects {} inputs, got {}",
                self.inputs,
                inputs.len()
            )));
        }
        let mut drive = inputs.to_vec();
        if self.bias {
            drive.push(self.neuron.v_dd);
        }
        let mut stats = LayerStats::default();
        let mut out = vec![0.0; self.outputs];
        for (c, &col_start) in self.col_starts.iter().enumerate() {
            let mut partials = Vec::with_capacity(self.tiles.len());
            for (r, &row_start) in self.row_starts.iter().enumerate() {
                let net = &self.tiles[r][c];
                let slice = &drive[row_start..row_start + net.n_inputs()];
                let sol = net.solve(slice, solver).map_err(|source| PipelineError::Tile {
                    layer: 0,
                    row: r,
                    col: c,
                    source,
                })?;
                stats.resistive_power += sol.element_powers.total();
                stats.cg_iterations += sol.iterations;
                partials.push(sol.sense_currents);
            }
            let merged = merge_partials(&partials, 0.0)?;
            out[col_start..col_start + merged.len()].copy_from_slice(&merged);
        }
        Ok((out, stats))
    }

    pub fn forward(&self, inputs: &[f64], solver: &SolverConfig) -> Result<(Vec<f64>, LayerStats), PipelineError> {
        let (currents, stats) = self.currents(inputs, solver)?;
        let v = currents
            .iter()
            .map(|&i| crate::devices::neuron_transfer(i, &self.neuron))
            .collect();
        Ok((v, stats))
    }
}

fn tag_layer(e: PipelineError, layer: usize) -> PipelineError {
    match e {
        PipelineError::Tile { row, col, source, .. } => PipelineError::Tile {
            layer,
            row,
            col,
            source,
        },
        other => other,
    }
}

/// One analog layer: tile, solve every tile, merge, activate.
pub fn forward_layer(
    inputs: &[f64],
    layer: &LayerWeights,
    plan: &LayerPlan,
    subarray_size: usize,
    config: &SimConfig,
) -> Result<Vec<f64>, PipelineError> {
    let compiled = CompiledLayer::new(layer, plan, subarray_size, config)?;
    Ok(compiled.forward(inputs, &config.solver)?.0)
}

/// Outcome of classifying one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageOutcome {
    pub class: usize,
    pub outputs: Vec<f64>,
    pub layers: Vec<LayerStats>,
    /// Lowest and highest voltage seen on any layer boundary.
    pub voltage_span: (f64, f64),
}

/// A whole network compiled against one plan and configuration.
#[derive(Debug, Clone)]
pub struct CompiledNetwork {
    layers: Vec<CompiledLayer>,
    config: SimConfig,
    plan: PartitionPlan,
}

impl CompiledNetwork {
    pub fn new(model: &DnnModel, plan: &PartitionPlan, config: &SimConfig) -> Result<Self, PipelineError> {
        model.validate().map_err(PipelineError::Model)?;
        if plan.layers.len() != model.layers.len() {
            return Err(PipelineError::Model(format!(
                "plan has {} layers, model has {}",
                plan.layers.len(),
                model.layers.len()
            )));
        }
        let layers = model
            .layers
            .iter()
            .zip(&plan.layers)
            .enumerate()
            .map(|(l, (w, p))| CompiledLayer::new(w, p, plan.subarray_size, config).map_err(|e| tag_layer(e, l)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            layers,
            config: *config,
            plan: plan.clone(),
        })
    }

    pub fn layers(&self) -> &[CompiledLayer] {
        &self.layers
    }

    pub fn plan(&self) -> &PartitionPlan {
        &self.plan
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn peripheral_power(&self) -> f64 {
        self.layers.iter().map(|l| l.units.power(&self.config.overheads)).sum()
    }

    pub fn max_delay(&self) -> f64 {
        self.layers.iter().map(|l| l.max_delay).fold(0.0, f64::max)
    }

    pub fn run_voltages(&self, inputs: &[f64]) -> Result<ImageOutcome, PipelineError> {
        let mut v = inputs.to_vec();
        let mut lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let mut hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut stats = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let (next, s) = layer.forward(&v, &self.config.solver).map_err(|e| tag_layer(e, l))?;
            for &x in &next {
                lo = lo.min(x);
                hi = hi.max(x);
            }
            stats.push(s);
            v = next;
        }
        Ok(ImageOutcome {
            class: argmax(&v),
            outputs: v,
            layers: stats,
            voltage_span: (lo, hi),
        })
    }

    pub fn run_image(&self, pixels: &[f32]) -> Result<ImageOutcome, PipelineError> {
        self.run_voltages(&self.config.encode_image(pixels)?)
    }
}

/// Classify one image through the analog network.
pub fn forward_network(
    pixels: &[f32],
    model: &DnnModel,
    plan: &PartitionPlan,
    config: &SimConfig,
) -> Result<usize, PipelineError> {
    Ok(CompiledNetwork::new(model, plan, config)?.run_image(pixels)?.class)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerDiagnostics {
    pub tiles: usize,
    pub mean_resistive_power: f64,
    pub mean_cg_iterations: f64,
    pub max_delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub top1_accuracy: f64,
    pub correct: usize,
    pub images_evaluated: usize,
    /// Mean total static power per inference, W.
    pub power_estimate: f64,
    pub max_delay: f64,
    pub voltage_span: (f64, f64),
    pub predictions: Vec<usize>,
    pub layers: Vec<LayerDiagnostics>,
}

pub fn evaluate_compiled(net: &CompiledNetwork, data: &Dataset) -> Result<EvalResult, PipelineError> {
    if data.is_empty() {
        return Err(PipelineError::Input("evaluation slice is empty".into()));
    }
    let outcomes = (0..data.len())
        .into_par_iter()
        .map(|k| net.run_image(data.image(k)))
        .collect::<Result<Vec<_>, _>>()?;

    let count = outcomes.len();
    let predictions: Vec<usize> = outcomes.iter().map(|o| o.class).collect();
    let correct = predictions
        .iter()
        .zip(&data.labels)
        .filter(|(p, &l)| **p == usize::from(l))
        .count();
    let mut layers: Vec<LayerDiagnostics> = net
        .layers
        .iter()
        .map(|l| LayerDiagnostics {
            tiles: l.tile_count(),
            max_delay: l.max_delay,
            ..Default::default()
        })
        .collect();
    let mut resistive = 0.0;
    let mut span = (f64::INFINITY, f64::NEG_INFINITY);
    for o in &outcomes {
        for (d, s) in layers.iter_mut().zip(&o.layers) {
            d.mean_resistive_power += s.resistive_power / count as f64;
            d.mean_cg_iterations += s.cg_iterations as f64 / count as f64;
            resistive += s.resistive_power;
        }
        span.0 = span.0.min(o.voltage_span.0);
        span.1 = span.1.max(o.voltage_span.1);
    }
    Ok(EvalResult {
        top1_accuracy: correct as f64 / count as f64,
        correct,
        images_evaluated: count,
        power_estimate: resistive / count as f64 + net.peripheral_power(),
        max_delay: net.max_delay(),
        voltage_span: span,
        predictions,
        layers,
    })
}

/// Top-1 accuracy, mean power and worst delay of a deployment over a slice.
pub fn evaluate(
    model: &DnnModel,
    plan: &PartitionPlan,
    config: &SimConfig,
    data: &Dataset,
) -> Result<EvalResult, PipelineError> {
    evaluate_compiled(&CompiledNetwork::new(model, plan, config)?, data)
}

/// Software-only accuracy of the model on a slice.
pub fn reference_accuracy(model: &DnnModel, config: &SimConfig, data: &Dataset) -> Result<(f64, Vec<usize>), PipelineError> {
    let preds = (0..data.len())
        .into_par_iter()
        .map(|k| Ok(model.reference_classify(&config.encode_image(data.image(k))?, &config.neuron)))
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let correct = preds
        .iter()
        .zip(&data.labels)
        .filter(|(p, &l)| **p == usize::from(l))
        .count();
    Ok((correct as f64 / data.len().max(1) as f64, preds))
}
