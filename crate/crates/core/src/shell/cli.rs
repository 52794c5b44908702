// SPDX-License-Identifier: Apache-2.0

//! `imcsim` command line.
//!
//! Failures print one line `error[<class>]: <message>` to stderr and exit
//! with status 1; usage errors print clap's usage text and exit with 2.

use std::ffi::OsString;
use std::io::Write;
use std::ops::Range;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::partitioner::PartitionPlan;
use crate::pipeline::trainer::{float_accuracy, train_float};
use crate::pipeline::{evaluate, PipelineError};
use crate::shell::config::{ConfigError, Layout, RunConfig};
use crate::shell::mnist::{IdxError, Split};
use crate::shell::sweep::{line_delay, run_sweep, write_report, SweepError};
use crate::shell::weights::{load_weights, save_weights, WeightError};

#[derive(Debug, Parser)]
#[command(name = "imcsim", version, about = "Analog in-memory-computing DNN inference with interconnect parasitics")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML run configuration; defaults apply to anything it omits.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice (overrides train.seed).
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Image index range `a..b`, or a count `n` meaning `0..n`.
    #[arg(long, global = true, value_name = "RANGE", value_parser = parse_range)]
    pub images: Option<Range<usize>>,
    /// Output path (weights for `train`, report stem for `sweep`, JSON for the others).
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print wire parasitics for the configured geometry.
    Extract {
        #[arg(long, value_enum)]
        layout: Option<LayoutArg>,
        /// Line length, in segments, for the Elmore delay.
        #[arg(long, default_value_t = 512)]
        segments: usize,
    },
    /// Print the partition plan.
    Plan {
        #[arg(long, value_name = "A")]
        array: Option<usize>,
        #[arg(long = "h-p", value_delimiter = ',', requires = "v_p")]
        h_p: Option<Vec<usize>>,
        #[arg(long = "v-p", value_delimiter = ',', requires = "h_p")]
        v_p: Option<Vec<usize>>,
    },
    /// Train the reference network and write its weights.
    Train {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long = "learning-rate")]
        learning_rate: Option<f64>,
    },
    /// Classify the image slice through the analog network.
    Run {
        #[arg(long, value_name = "A")]
        array: Option<usize>,
        #[arg(long, value_enum)]
        layout: Option<LayoutArg>,
        #[arg(long, value_name = "PATH")]
        weights: Option<PathBuf>,
    },
    /// Evaluate every configuration of the sweep and write the report.
    Sweep {
        #[arg(long, value_enum, value_delimiter = ',')]
        layouts: Option<Vec<LayoutArg>>,
        #[arg(long, value_name = "PATH")]
        weights: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum LayoutArg {
    Ideal,
    #[value(alias = "non_ideal")]
    NonIdeal,
}

impl From<LayoutArg> for Layout {
    fn from(l: LayoutArg) -> Self {
        match l {
            LayoutArg::Ideal => Layout::Ideal,
            LayoutArg::NonIdeal => Layout::NonIdeal,
        }
    }
}

pub fn parse_range(s: &str) -> Result<Range<usize>, String> {
    let bad = || format!("expected `a..b` or a count, got `{s}`");
    let range = match s.split_once("..") {
        Some((a, b)) => a.trim().parse().map_err(|_| bad())?..b.trim().parse().map_err(|_| bad())?,
        None => 0..s.trim().parse().map_err(|_| bad())?,
    };
    if range.start >= range.end {
        return Err(format!("image range `{s}` is empty"));
    }
    Ok(range)
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] IdxError),
    #[error(transparent)]
    Weights(#[from] WeightError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error("{0}")]
    Train(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Machine-readable error class.
    pub fn class(&self) -> &'static str {
        match self {
            CliError::Config(ConfigError::Plan(_)) => "plan",
            CliError::Config(_) => "config",
            CliError::Dataset(_) => "dataset",
            CliError::Weights(_) => "weights",
            CliError::Pipeline(PipelineError::Plan(_)) => "plan",
            CliError::Pipeline(PipelineError::Tile { .. }) => "solver",
            CliError::Pipeline(_) => "pipeline",
            CliError::Sweep(SweepError::Schema { .. }) => "report",
            CliError::Sweep(SweepError::Eval { .. }) => "solver",
            CliError::Sweep(SweepError::Io { .. } | SweepError::Csv(_)) => "io",
            CliError::Sweep(_) => "sweep",
            CliError::Train(_) => "train",
            CliError::Io(_) => "io",
        }
    }
}

/// Parse arguments, run, and map the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let stdout = std::io::stdout();
    match run(&cli, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.class());
            ExitCode::from(1)
        }
    }
}

fn load_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    if let Some(r) = &common.images {
        cfg.dataset.start = r.start;
        cfg.dataset.end = r.end;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_json(path: &PathBuf, value: &serde_json::Value) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value).expect("serializable") + "\n")?;
    Ok(())
}

fn print_plan(plan: &PartitionPlan, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "array_size={}", plan.subarray_size)?;
    for (l, p) in plan.layers.iter().enumerate() {
        writeln!(
            out,
            "layer={} n={} m={} h_p={} v_p={} tile_rows={:?} tile_cols={:?}",
            l + 1,
            p.n,
            p.m,
            p.h_p,
            p.v_p,
            p.row_heights,
            p.col_widths
        )?;
    }
    writeln!(out, "H_P={:?}", plan.h_p())?;
    writeln!(out, "V_P={:?}", plan.v_p())?;
    writeln!(out, "total_partitions={}", plan.total_partitions())?;
    writeln!(out, "tiles={}", plan.tiles())
}

/// Execute a parsed command, writing results to `out`.
pub fn run(cli: &Cli, out: &mut impl Write) -> Result<(), CliError> {
    let mut cfg = load_config(&cli.common)?;
    match &cli.command {
        Command::Extract { layout, segments } => {
            let layout = layout.map_or(cfg.geometry.layout, Layout::from);
            let seg = cfg.segment(layout)?;
            let delay = line_delay(&cfg, layout, *segments)?;
            writeln!(out, "layout={layout}")?;
            writeln!(out, "pitch_m={:e}", cfg.geometry.pitch(layout))?;
            writeln!(out, "ratio_fs={}", seg.ratio_fs)?;
            writeln!(out, "ratio_ms={}", seg.ratio_ms)?;
            writeln!(out, "rho_eff_ohm_m={:e}", seg.rho_eff)?;
            writeln!(out, "r_seg_ohm={:e}", seg.r_seg)?;
            writeln!(out, "c_seg_f={:e}", seg.c_seg)?;
            writeln!(out, "segments={segments}")?;
            writeln!(out, "elmore_delay_s={delay:e}")?;
            writeln!(out, "delay_over_budget={}", delay > cfg.circuit.delay_budget)?;
            if let Some(path) = &cli.common.out {
                write_json(
                    path,
                    &serde_json::json!({
                        "layout": layout,
                        "segment": seg,
                        "segments": segments,
                        "elmore_delay": delay,
                    }),
                )?;
            }
        }
        Command::Plan { array, h_p, v_p } => {
            if let Some(a) = array {
                cfg.partition.array_size = *a;
            }
            if h_p.is_some() {
                cfg.partition.h_p.clone_from(h_p);
                cfg.partition.v_p.clone_from(v_p);
            }
            let plan = cfg.plan()?;
            print_plan(&plan, out)?;
            if let Some(path) = &cli.common.out {
                write_json(path, &plan.to_json())?;
            }
        }
        Command::Train { epochs, learning_rate } => {
            if let Some(e) = epochs {
                cfg.train.epochs = *e;
            }
            if let Some(lr) = learning_rate {
                cfg.train.learning_rate = *lr;
            }
            let sim = cfg.sim_config(Layout::Ideal)?;
            let mut train = cfg.dataset.load(Split::Train)?;
            if let Some(r) = &cli.common.images {
                train = train.slice(r.clone());
            }
            let test = cfg.dataset.load(Split::Test)?;
            let (net, log) = train_float(&train, &cfg.model.layer_dims, &cfg.train, &sim)
                .map_err(|e| CliError::Train(e.to_string()))?;
            writeln!(out, "initial_loss={}", log.initial_loss)?;
            for (e, loss) in log.epoch_losses.iter().enumerate() {
                writeln!(out, "epoch={} loss={loss}", e + 1)?;
            }
            writeln!(out, "test_accuracy={}", float_accuracy(&net, &test, &sim))?;
            let path = cli.common.out.clone().unwrap_or(cfg.model.weights.clone());
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            save_weights(&net.to_model(&cfg.model.layer_dims), &path)?;
            writeln!(out, "weights={}", path.display())?;
        }
        Command::Run { array, layout, weights } => {
            if let Some(a) = array {
                cfg.partition.array_size = *a;
            }
            let layout = layout.map_or(cfg.geometry.layout, Layout::from);
            let model = load_weights(weights.as_ref().unwrap_or(&cfg.model.weights))?;
            let data = cfg.dataset.load_slice()?;
            let plan = cfg.plan()?;
            let result = evaluate(&model, &plan, &cfg.sim_config(layout)?, &data)?;
            for class in &result.predictions {
                writeln!(out, "{class}")?;
            }
            eprintln!(
                "accuracy={} images={} power_w={:e} max_delay_s={:e}",
                result.top1_accuracy, result.images_evaluated, result.power_estimate, result.max_delay
            );
            if let Some(path) = &cli.common.out {
                write_json(
                    path,
                    &serde_json::json!({
                        "layout": layout,
                        "images": [cfg.dataset.start, cfg.dataset.start + data.len()],
                        "plan": plan.to_json(),
                        "result": result,
                    }),
                )?;
            }
        }
        Command::Sweep { layouts, weights } => {
            if let Some(l) = layouts {
                cfg.sweep.layouts = l.iter().copied().map(Layout::from).collect();
            }
            let model = load_weights(weights.as_ref().unwrap_or(&cfg.model.weights))?;
            let data = cfg.dataset.load_slice()?;
            let report = run_sweep(&cfg.sweep, &cfg, &model, &data)?;
            let stem = cli.common.out.clone().unwrap_or(cfg.output.report.clone());
            for path in write_report(&report, &stem, cfg.output.format)? {
                writeln!(out, "wrote {}", path.display())?;
            }
        }
    }
    Ok(())
}
