// SPDX-License-Identifier: Apache-2.0

//! Run configuration, read from and written to TOML.
//!
//! Every section and key is optional and falls back to the defaults below;
//! unknown keys are rejected with their line and column.

use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crossbar::{OverheadPowers, SolverConfig};
use crate::devices::{ConductanceRange, NeuronModel};
use crate::parasitics::{segment_parasitics, MaterialParams, ParasiticSegment, WireGeometry, DEFAULT_EPSILON, LAMBDA};
use crate::partitioner::{plan_partitions, PartitionPlan};
use crate::pipeline::trainer::TrainConfig;
use crate::pipeline::SimConfig;
use crate::shell::mnist::{load_split, Dataset, Resize, Split};
use crate::shell::sweep::SweepSpec;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("partition plan: {0}")]
    Plan(#[from] crate::partitioner::PlanError),
}

/// Bitcell layout preset: sets the wire length of one segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Ideal,
    #[serde(alias = "non-ideal")]
    NonIdeal,
}

impl Layout {
    pub fn name(self) -> &'static str {
        match self {
            Layout::Ideal => "ideal",
            Layout::NonIdeal => "non_ideal",
        }
    }
}

impl std::fmt::Display for Layout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    /// Layout preset used by `run`; sweeps list their own presets.
    pub layout: Layout,
    pub width: f64,
    pub thickness: f64,
    pub spacing: f64,
    pub layer_gap: f64,
    /// Dielectric permittivity, F/m.
    pub epsilon: f64,
    /// Segment length of the ideal bitcell layout, m.
    pub pitch_ideal: f64,
    /// Segment length of the non-ideal bitcell layout, m.
    pub pitch_non_ideal: f64,
    /// Multiplier on segment resistance and capacitance.
    pub parasitic_scale: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        let wire = WireGeometry::default();
        Self {
            layout: Layout::Ideal,
            width: wire.width,
            thickness: wire.thickness,
            spacing: wire.spacing,
            layer_gap: wire.layer_gap,
            epsilon: DEFAULT_EPSILON,
            pitch_ideal: 40.0 * LAMBDA,
            pitch_non_ideal: 80.0 * LAMBDA,
            parasitic_scale: 1.0,
        }
    }
}

impl GeometryConfig {
    pub fn wire(&self) -> WireGeometry {
        WireGeometry {
            length: self.pitch_ideal,
            width: self.width,
            thickness: self.thickness,
            spacing: self.spacing,
            layer_gap: self.layer_gap,
        }
    }

    pub fn pitch(&self, layout: Layout) -> f64 {
        match layout {
            Layout::Ideal => self.pitch_ideal,
            Layout::NonIdeal => self.pitch_non_ideal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceConfig {
    /// Siemens.
    pub g_min: f64,
    /// Siemens.
    pub g_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<u32>,
    /// Full-scale input voltage as a fraction of `v_dd`.
    pub encode_scale: f64,
}

impl Default for DeviceConfig {
    /// A 1 µS – 300 µS window: wide enough that line resistance visibly
    /// distorts unpartitioned layers at the default wire geometry.
    fn default() -> Self {
        Self {
            g_min: 1e-6,
            g_max: 300e-6,
            levels: None,
            encode_scale: 1.0,
        }
    }
}

impl DeviceConfig {
    pub fn range(&self) -> ConductanceRange {
        ConductanceRange {
            g_min: self.g_min,
            g_max: self.g_max,
            levels: self.levels,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CircuitConfig {
    /// Series resistance of every input driver, Ω.
    pub drive_source_r: f64,
    /// On-resistance of a partition switch, Ω.
    pub switch_on_r: f64,
    /// Amplifier input capacitance at the end of each line, F.
    pub c_load: f64,
    /// Sampling period that every line delay must meet, s.
    pub delay_budget: f64,
}

impl Default for CircuitConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        Self {
            drive_source_r: sim.drive_source_r,
            switch_on_r: sim.switch_on_r,
            c_load: sim.c_load,
            delay_budget: sim.delay_budget,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub array_size: usize,
    /// Per-layer horizontal partition counts; requires `v_p` as well.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_p: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_p: Option<Vec<usize>>,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            array_size: 32,
            h_p: None,
            v_p: None,
        }
    }
}

impl PartitionConfig {
    pub fn overrides(&self) -> Result<Option<Vec<(usize, usize)>>, ConfigError> {
        match (&self.h_p, &self.v_p) {
            (None, None) => Ok(None),
            (Some(h), Some(v)) if h.len() == v.len() => Ok(Some(h.iter().copied().zip(v.iter().copied()).collect())),
            (Some(h), Some(v)) => Err(ConfigError::Invalid(format!(
                "partition.h_p has {} entries but partition.v_p has {}",
                h.len(),
                v.len()
            ))),
            _ => Err(ConfigError::Invalid(
                "partition.h_p and partition.v_p must be given together".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Test,
}

impl From<SplitName> for Split {
    fn from(s: SplitName) -> Self {
        match s {
            SplitName::Train => Split::Train,
            SplitName::Test => Split::Test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Directory holding the unpacked MNIST IDX files.
    pub dir: PathBuf,
    /// Split evaluated by `run` and `sweep`.
    pub split: SplitName,
    /// First image of the evaluation slice.
    pub start: usize,
    /// One past the last image of the evaluation slice.
    pub end: usize,
    pub resize: Resize,
    /// Side of the square network input image.
    pub side: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("data/mnist"),
            split: SplitName::Test,
            start: 0,
            end: 500,
            resize: Resize::CenterCrop,
            side: 20,
        }
    }
}

impl DatasetConfig {
    pub fn slice(&self) -> Range<usize> {
        self.start..self.end
    }

    /// Load a split, resized to the network input.
    pub fn load(&self, split: Split) -> Result<Dataset, crate::shell::mnist::IdxError> {
        Ok(load_split(&self.dir, split)?.resized(self.side, self.resize))
    }

    /// Load the configured evaluation slice.
    pub fn load_slice(&self) -> Result<Dataset, crate::shell::mnist::IdxError> {
        Ok(load_split(&self.dir, self.split.into())?
            .slice(self.slice())
            .resized(self.side, self.resize))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Weight container loaded by `run` and `sweep`, written by `train`.
    pub weights: PathBuf,
    pub layer_dims: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            weights: PathBuf::from("crates/core/fixtures/reference.imcw"),
            layer_dims: vec![400, 120, 84, 10],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
    #[default]
    Both,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Report path without extension; `.csv` and `.json` are appended.
    pub report: PathBuf,
    pub format: ReportFormat,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            report: PathBuf::from("out/report"),
            format: ReportFormat::Both,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub material: MaterialParams,
    pub device: DeviceConfig,
    pub neuron: NeuronModel,
    pub circuit: CircuitConfig,
    pub power: OverheadPowers,
    pub solver: SolverConfig,
    pub partition: PartitionConfig,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub output: OutputConfig,
    pub sweep: SweepSpec,
}

fn positive(name: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::Invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<(), ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::Invalid(format!("{name} must be non-negative and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string().trim().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        toml::to_string_pretty(self).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            ConfigError::Parse(msg) => ConfigError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        fs::write(path, self.to_toml_string()?).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let g = &self.geometry;
        g.wire()
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("geometry: {e}")))?;
        positive("geometry.epsilon", g.epsilon)?;
        positive("geometry.pitch_ideal", g.pitch_ideal)?;
        positive("geometry.pitch_non_ideal", g.pitch_non_ideal)?;
        non_negative("geometry.parasitic_scale", g.parasitic_scale)?;
        self.material
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("material: {e}")))?;
        self.device
            .range()
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("device: {e}")))?;
        positive("device.encode_scale", self.device.encode_scale)?;
        if self.device.encode_scale > 1.0 {
            return Err(ConfigError::Invalid(format!(
                "device.encode_scale must not exceed 1, got {}",
                self.device.encode_scale
            )));
        }
        self.neuron
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("neuron: {e}")))?;
        let c = &self.circuit;
        non_negative("circuit.drive_source_r", c.drive_source_r)?;
        non_negative("circuit.switch_on_r", c.switch_on_r)?;
        non_negative("circuit.c_load", c.c_load)?;
        positive("circuit.delay_budget", c.delay_budget)?;
        for (name, v) in [
            ("power.p_amp", self.power.p_amp),
            ("power.p_neuron", self.power.p_neuron),
            ("power.p_demux", self.power.p_demux),
            ("power.p_switch", self.power.p_switch),
        ] {
            non_negative(name, v)?;
        }
        positive("solver.tolerance", self.solver.tolerance)?;
        if self.solver.max_iterations == 0 {
            return Err(ConfigError::Invalid("solver.max_iterations must be at least 1".into()));
        }
        if self.partition.array_size == 0 {
            return Err(ConfigError::Invalid("partition.array_size must be at least 1".into()));
        }
        self.partition.overrides()?;
        if self.dataset.start >= self.dataset.end {
            return Err(ConfigError::Invalid(format!(
                "dataset slice {}..{} is empty",
                self.dataset.start, self.dataset.end
            )));
        }
        if self.dataset.side == 0 {
            return Err(ConfigError::Invalid("dataset.side must be at least 1".into()));
        }
        let dims = &self.model.layer_dims;
        if dims.len() < 2 || dims.contains(&0) {
            return Err(ConfigError::Invalid(format!(
                "model.layer_dims needs at least two non-zero entries, got {dims:?}"
            )));
        }
        if dims[0] != self.dataset.side * self.dataset.side {
            return Err(ConfigError::Invalid(format!(
                "model.layer_dims[0] = {} but images have {}x{} pixels",
                dims[0], self.dataset.side, self.dataset.side
            )));
        }
        if self.train.batch_size == 0 || !(self.train.learning_rate > 0.0) {
            return Err(ConfigError::Invalid(
                "train.batch_size and train.learning_rate must be positive".into(),
            ));
        }
        self.sweep.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// Parasitics of one wire segment under a layout preset.
    pub fn segment(&self, layout: Layout) -> Result<ParasiticSegment, ConfigError> {
        let g = &self.geometry;
        let seg = segment_parasitics(g.pitch(layout), &g.wire(), &self.material, g.epsilon)
            .map_err(|e| ConfigError::Invalid(format!("geometry: {e}")))?;
        Ok(seg.scaled(g.parasitic_scale))
    }

    /// Electrical simulation parameters under a layout preset.
    pub fn sim_config(&self, layout: Layout) -> Result<SimConfig, ConfigError> {
        Ok(SimConfig {
            neuron: self.neuron,
            conductance: self.device.range(),
            encode_scale: self.device.encode_scale,
            seg: self.segment(layout)?,
            drive_source_r: self.circuit.drive_source_r,
            switch_on_r: self.circuit.switch_on_r,
            solver: self.solver,
            overheads: self.power,
            c_load: self.circuit.c_load,
            delay_budget: self.circuit.delay_budget,
        })
    }

    /// Partition plan of the `[partition]` section for the configured model.
    pub fn plan(&self) -> Result<PartitionPlan, ConfigError> {
        let shapes: Vec<(usize, usize)> = self.model.layer_dims.windows(2).map(|d| (d[0], d[1])).collect();
        let overrides = self.partition.overrides()?;
        Ok(plan_partitions(&shapes, self.partition.array_size, overrides.as_deref())?)
    }
}
