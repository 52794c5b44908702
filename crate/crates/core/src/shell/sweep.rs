// SPDX-License-Identifier: Apache-2.0

//! Design-space sweep over array sizes, layout presets and plan overrides,
//! with CSV and JSON report emission.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parasitics::elmore_delay;
use crate::partitioner::{plan_partitions, PartitionPlan, PlanError};
use crate::pipeline::{evaluate, DnnModel, EvalResult, PipelineError};
use crate::shell::config::{ConfigError, Layout, ReportFormat, RunConfig};
use crate::shell::mnist::Dataset;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("sweep has no rows: {0}")]
    Empty(String),
    #[error("row {row}: {source}")]
    Plan { row: String, source: PlanError },
    #[error("row {row}: {source}")]
    Eval { row: String, source: PipelineError },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("report schema violation in row {row}: {reason}")]
    Schema { row: usize, reason: String },
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// An explicit `(H_P, V_P)` plan for one array size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanOverride {
    pub array_size: usize,
    pub h_p: Vec<usize>,
    pub v_p: Vec<usize>,
}

impl PlanOverride {
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.h_p.iter().copied().zip(self.v_p.iter().copied()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub array_sizes: Vec<usize>,
    pub layouts: Vec<Layout>,
    /// Extra rows evaluated after the default-plan rows of each layout.
    pub overrides: Vec<PlanOverride>,
}

impl Default for SweepSpec {
    /// The five array sizes with default plans plus the finest 32×32 plan,
    /// under the ideal layout.
    fn default() -> Self {
        Self {
            array_sizes: vec![32, 64, 128, 256, 512],
            layouts: vec![Layout::Ideal],
            overrides: vec![PlanOverride {
                array_size: 32,
                h_p: vec![16, 8, 8],
                v_p: vec![8, 8, 1],
            }],
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), SweepError> {
        if self.layouts.is_empty() {
            return Err(SweepError::Empty("sweep.layouts is empty".into()));
        }
        if self.array_sizes.is_empty() && self.overrides.is_empty() {
            return Err(SweepError::Empty("sweep lists no array sizes and no overrides".into()));
        }
        for o in &self.overrides {
            if o.h_p.len() != o.v_p.len() {
                return Err(SweepError::Empty(format!(
                    "override at array size {} has {} h_p but {} v_p entries",
                    o.array_size,
                    o.h_p.len(),
                    o.v_p.len()
                )));
            }
        }
        Ok(())
    }

    /// Every row of the sweep in report order, with its plan overrides.
    pub fn rows(&self) -> Vec<(Layout, usize, Option<Vec<(usize, usize)>>)> {
        let mut rows = Vec::new();
        for &layout in &self.layouts {
            for &size in &self.array_sizes {
                rows.push((layout, size, None));
            }
            for o in &self.overrides {
                rows.push((layout, o.array_size, Some(o.pairs())));
            }
        }
        rows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub layout: Layout,
    pub array_size: usize,
    /// `"default"` for minimum-count plans, `"override"` otherwise.
    pub plan_kind: String,
    pub h_p: Vec<usize>,
    pub v_p: Vec<usize>,
    pub total_partitions: usize,
    pub tiles: usize,
    pub accuracy: f64,
    pub correct: usize,
    pub images: usize,
    /// W
    pub power: f64,
    /// s
    pub max_delay: f64,
    pub delay_over_budget: bool,
    pub utilization: f64,
    pub plan: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub seed: u64,
    pub images: [usize; 2],
    pub delay_budget: f64,
    /// Elmore delay of a 512-segment line under the ideal layout, s.
    pub line_delay_512: f64,
    pub rows: Vec<SweepRow>,
}

/// Elmore delay of one `segments`-long line under a layout preset.
pub fn line_delay(config: &RunConfig, layout: Layout, segments: usize) -> Result<f64, ConfigError> {
    let seg = config.segment(layout)?;
    Ok(elmore_delay(segments, seg.r_seg, seg.c_seg, config.circuit.c_load))
}

pub fn make_row(
    layout: Layout,
    plan: &PartitionPlan,
    overridden: bool,
    eval: &EvalResult,
    bias: bool,
    delay_budget: f64,
) -> SweepRow {
    SweepRow {
        layout,
        array_size: plan.subarray_size,
        plan_kind: if overridden { "override" } else { "default" }.into(),
        h_p: plan.h_p(),
        v_p: plan.v_p(),
        total_partitions: plan.total_partitions(),
        tiles: plan.tiles(),
        accuracy: eval.top1_accuracy,
        correct: eval.correct,
        images: eval.images_evaluated,
        power: eval.power_estimate,
        max_delay: eval.max_delay,
        delay_over_budget: eval.max_delay > delay_budget,
        utilization: plan.utilization(bias),
        plan: plan.to_json(),
    }
}

/// Evaluate every row of `spec` on `data`.
pub fn run_sweep(spec: &SweepSpec, config: &RunConfig, model: &DnnModel, data: &Dataset) -> Result<SweepReport, SweepError> {
    spec.validate()?;
    let bias = model.layers.iter().any(|l| l.bias);
    let shapes = model.layer_shapes();
    let mut rows = Vec::new();
    for (layout, size, overrides) in spec.rows() {
        let label = match &overrides {
            None => format!("{layout} A={size}"),
            Some(o) => format!("{layout} A={size} override {o:?}"),
        };
        let plan = plan_partitions(&shapes, size, overrides.as_deref()).map_err(|source| SweepError::Plan {
            row: label.clone(),
            source,
        })?;
        let sim = config.sim_config(layout)?;
        let eval = evaluate(model, &plan, &sim, data).map_err(|source| SweepError::Eval { row: label, source })?;
        rows.push(make_row(layout, &plan, overrides.is_some(), &eval, bias, sim.delay_budget));
    }
    let report = SweepReport {
        seed: config.train.seed,
        images: [config.dataset.start, config.dataset.start + data.len()],
        delay_budget: config.circuit.delay_budget,
        line_delay_512: line_delay(config, Layout::Ideal, 512)?,
        rows,
    };
    validate_report(&report)?;
    Ok(report)
}

/// Check every row against the report schema.
pub fn validate_report(report: &SweepReport) -> Result<(), SweepError> {
    if report.rows.is_empty() {
        return Err(SweepError::Empty("report has no rows".into()));
    }
    let layers = report.rows[0].h_p.len();
    for (k, r) in report.rows.iter().enumerate() {
        let fail = |reason: String| Err(SweepError::Schema { row: k, reason });
        if r.h_p.len() != layers || r.v_p.len() != layers {
            return fail(format!("expected {layers} layers of h_p/v_p"));
        }
        if r.h_p.iter().chain(&r.v_p).any(|&p| p == 0) {
            return fail("zero partition count".into());
        }
        if r.total_partitions != r.h_p.iter().chain(&r.v_p).sum::<usize>() {
            return fail("total_partitions does not match h_p + v_p".into());
        }
        if r.images == 0 || r.correct > r.images {
            return fail(format!("{} correct of {} images", r.correct, r.images));
        }
        if !(0.0..=1.0).contains(&r.accuracy) || r.accuracy != r.correct as f64 / r.images as f64 {
            return fail(format!("accuracy {} inconsistent", r.accuracy));
        }
        if !(r.power.is_finite() && r.power > 0.0) {
            return fail(format!("power {}", r.power));
        }
        if !(r.max_delay.is_finite() && r.max_delay >= 0.0) {
            return fail(format!("max_delay {}", r.max_delay));
        }
        if !(r.utilization > 0.0 && r.utilization <= 1.0) {
            return fail(format!("utilization {}", r.utilization));
        }
        if r.plan_kind != "default" && r.plan_kind != "override" {
            return fail(format!("plan kind {}", r.plan_kind));
        }
    }
    Ok(())
}

pub fn csv_header(layers: usize) -> Vec<String> {
    let mut h = vec!["layout".to_string(), "array_size".into(), "plan".into()];
    h.extend((1..=layers).map(|l| format!("h_p_{l}")));
    h.extend((1..=layers).map(|l| format!("v_p_{l}")));
    for c in [
        "total_partitions",
        "tiles",
        "accuracy",
        "correct",
        "images",
        "power_w",
        "max_delay_s",
        "delay_over_budget",
        "utilization",
    ] {
        h.push(c.into());
    }
    h
}

pub fn to_csv(report: &SweepReport) -> Result<String, SweepError> {
    validate_report(report)?;
    let layers = report.rows[0].h_p.len();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(csv_header(layers))?;
    for r in &report.rows {
        let mut rec = vec![r.layout.to_string(), r.array_size.to_string(), r.plan_kind.clone()];
        rec.extend(r.h_p.iter().chain(&r.v_p).map(ToString::to_string));
        rec.extend([
            r.total_partitions.to_string(),
            r.tiles.to_string(),
            r.accuracy.to_string(),
            r.correct.to_string(),
            r.images.to_string(),
            format!("{:e}", r.power),
            format!("{:e}", r.max_delay),
            r.delay_over_budget.to_string(),
            r.utilization.to_string(),
        ]);
        w.write_record(rec)?;
    }
    let bytes = w.into_inner().map_err(|e| SweepError::Io {
        path: "<memory>".into(),
        source: e.into_error(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn to_json(report: &SweepReport) -> Result<String, SweepError> {
    validate_report(report)?;
    Ok(serde_json::to_string_pretty(report).expect("report serializes") + "\n")
}

fn write(path: &Path, text: &str) -> Result<(), SweepError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| SweepError::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| SweepError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Write the report next to `stem` as `.csv` and/or `.json`.
pub fn write_report(report: &SweepReport, stem: &Path, format: ReportFormat) -> Result<Vec<PathBuf>, SweepError> {
    let mut written = Vec::new();
    if matches!(format, ReportFormat::Csv | ReportFormat::Both) {
        let path = stem.with_extension("csv");
        write(&path, &to_csv(report)?)?;
        written.push(path);
    }
    if matches!(format, ReportFormat::Json | ReportFormat::Both) {
        let path = stem.with_extension("json");
        write(&path, &to_json(report)?)?;
        written.push(path);
    }
    Ok(written)
}
