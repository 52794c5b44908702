// SPDX-License-Identifier: Apache-2.0

//! DC operating point of one parasitic-annotated crossbar subarray.
//!
//! Input `i` is driven from the left edge through `drive_source_r` and runs
//! across `m` bitcells; output `j` owns a positive and a negative sense line
//! that run down all `n` inputs to ideal virtual-ground amplifiers at the
//! bottom edge. Every bitcell pitch of every line is one `r_seg` resistor.
//!
//! With `r_seg > 0` the unknowns are ordered line by line:
//!
//! ```text
//! input  (i, j) -> i·m + j
//! pos    (i, j) -> n·m + j·n + i
//! neg    (i, j) -> 2·n·m + j·n + i
//! ```
//!
//! so each wire is a contiguous tridiagonal block. With `r_seg = 0` the lines
//! collapse: input lines become one node each (or a fixed voltage when the
//! driver is ideal) and sense lines merge into their virtual ground.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::devices::{diff_sense_all, SynapseCell};
use crate::linalg::{self, CsrMatrix, DenseCholesky, SolveError, TridiagonalPreconditioner};
use crate::parasitics::{elmore_delay, ParasiticSegment};

/// Arrays with fewer cells than this are solved by dense Cholesky.
pub const DENSE_CELL_LIMIT: usize = 16 * 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CrossbarError {
    #[error("structural error: {0}")]
    Structure(String),
    #[error("solver error: {0}")]
    Solver(#[from] SolveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 20_000,
        }
    }
}

/// One `n_inputs × m_outputs` subarray of differential synapses.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossbarArray {
    pub n_inputs: usize,
    pub m_outputs: usize,
    /// Row-major, `cells[i * m_outputs + j]` joins input `i` to output `j`.
    pub cells: Vec<SynapseCell>,
    pub seg: ParasiticSegment,
    pub drive_source_r: f64,
    pub switch_on_r: f64,
}

impl CrossbarArray {
    pub fn new(
        n_inputs: usize,
        m_outputs: usize,
        cells: Vec<SynapseCell>,
        seg: ParasiticSegment,
    ) -> Result<Self, CrossbarError> {
        let arr = Self {
            n_inputs,
            m_outputs,
            cells,
            seg,
            drive_source_r: 0.0,
            switch_on_r: 0.0,
        };
        arr.validate()?;
        Ok(arr)
    }

    pub fn with_drive_source_r(mut self, r: f64) -> Self {
        self.drive_source_r = r;
        self
    }

    pub fn validate(&self) -> Result<(), CrossbarError> {
        if self.n_inputs == 0 || self.m_outputs == 0 {
            return Err(CrossbarError::Structure(format!(
                "array must be at least 1x1, got {}x{}",
                self.n_inputs, self.m_outputs
            )));
        }
        if self.cells.len() != self.n_inputs * self.m_outputs {
            return Err(CrossbarError::Structure(format!(
                "{}x{} array needs {} cells, got {}",
                self.n_inputs,
                self.m_outputs,
                self.n_inputs * self.m_outputs,
                self.cells.len()
            )));
        }
        if !(self.seg.r_seg >= 0.0 && self.seg.r_seg.is_finite()) {
            return Err(CrossbarError::Structure(format!(
                "segment resistance must be finite and non-negative, got {}",
                self.seg.r_seg
            )));
        }
        if !(self.drive_source_r >= 0.0 && self.drive_source_r.is_finite()) {
            return Err(CrossbarError::Structure(format!(
                "drive source resistance must be finite and non-negative, got {}",
                self.drive_source_r
            )));
        }
        if let Some(k) = self
            .cells
            .iter()
            .position(|c| !(c.g_pos > 0.0 && c.g_neg > 0.0 && c.g_pos.is_finite() && c.g_neg.is_finite()))
        {
            return Err(CrossbarError::Structure(format!(
                "cell ({}, {}) has a non-positive conductance",
                k / self.m_outputs,
                k % self.m_outputs
            )));
        }
        Ok(())
    }

    pub fn cell(&self, i: usize, j: usize) -> SynapseCell {
        self.cells[i * self.m_outputs + j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum InputLines {
    /// One unknown per bitcell.
    Wired,
    /// One unknown per line behind a resistive driver.
    Lumped,
    /// Every node sits at its driver voltage.
    Driven,
}

#[derive(Debug, Clone)]
enum Factor {
    None,
    Dense(DenseCholesky),
    Iterative(TridiagonalPreconditioner),
}

/// Dissipation split by branch class, in watts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BranchPowers {
    pub devices: f64,
    pub input_wires: f64,
    pub sense_wires: f64,
    pub drivers: f64,
}

impl BranchPowers {
    pub fn total(&self) -> f64 {
        self.devices + self.input_wires + self.sense_wires + self.drivers
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSolution {
    /// Unknown node voltages in the documented ordering.
    pub node_voltages: Vec<f64>,
    /// Differential output currents, one per output.
    pub sense_currents: Vec<f64>,
    pub pos_currents: Vec<f64>,
    pub neg_currents: Vec<f64>,
    /// Current leaving each input driver.
    pub driver_currents: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub element_powers: BranchPowers,
}

impl NetworkSolution {
    /// Relative KCL mismatch between total driver and total virtual-ground current.
    pub fn kcl_mismatch(&self) -> f64 {
        let drive: f64 = self.driver_currents.iter().sum();
        let sink: f64 = self.pos_currents.iter().sum::<f64>() + self.neg_currents.iter().sum::<f64>();
        let scale = self
            .driver_currents
            .iter()
            .map(|c| c.abs())
            .sum::<f64>()
            .max(f64::MIN_POSITIVE);
        (drive - sink).abs() / scale
    }
}

/// Assembled and factorized nodal system for one array. Independent of the
/// drive voltages, so it is built once and solved for many input vectors.
#[derive(Debug, Clone)]
pub struct CrossbarNetwork {
    n: usize,
    m: usize,
    cells: Vec<SynapseCell>,
    seg: ParasiticSegment,
    input_lines: InputLines,
    /// Conductance from each driver to the first input node.
    g_drive: f64,
    g_seg: f64,
    matrix: CsrMatrix,
    factor: Factor,
}

impl CrossbarNetwork {
    pub fn new(arr: &CrossbarArray) -> Result<Self, CrossbarError> {
        arr.validate()?;
        let (n, m) = (arr.n_inputs, arr.m_outputs);
        let wired = arr.seg.r_seg > 0.0;
        let (input_lines, g_drive) = if wired {
            (InputLines::Wired, 1.0 / (arr.drive_source_r + arr.seg.r_seg))
        } else if arr.drive_source_r > 0.0 {
            (InputLines::Lumped, 1.0 / arr.drive_source_r)
        } else {
            (InputLines::Driven, f64::INFINITY)
        };
        let g_seg = if wired { 1.0 / arr.seg.r_seg } else { f64::INFINITY };
        let mut net = Self {
            n,
            m,
            cells: arr.cells.clone(),
            seg: arr.seg,
            input_lines,
            g_drive,
            g_seg,
            matrix: CsrMatrix::from_triplets(0, &[]),
            factor: Factor::None,
        };
        net.matrix = net.assemble();
        net.factor = match net.matrix.dim() {
            0 => Factor::None,
            _ if n * m < DENSE_CELL_LIMIT => Factor::Dense(DenseCholesky::new(&net.matrix)?),
            _ => Factor::Iterative(TridiagonalPreconditioner::new(&net.matrix)?),
        };
        Ok(net)
    }

    pub fn n_inputs(&self) -> usize {
        self.n
    }

    pub fn m_outputs(&self) -> usize {
        self.m
    }

    pub fn unknowns(&self) -> usize {
        match self.input_lines {
            InputLines::Wired => 3 * self.n * self.m,
            InputLines::Lumped => self.n,
            InputLines::Driven => 0,
        }
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.factor, Factor::Dense(_))
    }

    /// Ground capacitance of unknown `k`; excluded from the DC system.
    pub fn node_capacitance(&self, k: usize) -> f64 {
        match self.input_lines {
            InputLines::Wired if k < self.unknowns() => self.seg.c_seg,
            InputLines::Lumped if k < self.n => self.seg.c_seg * self.m as f64,
            _ => 0.0,
        }
    }

    fn cell(&self, i: usize, j: usize) -> SynapseCell {
        self.cells[i * self.m + j]
    }

    pub fn input_index(&self, i: usize, j: usize) -> Option<usize> {
        match self.input_lines {
            InputLines::Wired => Some(i * self.m + j),
            InputLines::Lumped => Some(i),
            InputLines::Driven => None,
        }
    }

    pub fn pos_index(&self, i: usize, j: usize) -> Option<usize> {
        (self.input_lines == InputLines::Wired).then(|| self.n * self.m + j * self.n + i)
    }

    pub fn neg_index(&self, i: usize, j: usize) -> Option<usize> {
        (self.input_lines == InputLines::Wired).then(|| 2 * self.n * self.m + j * self.n + i)
    }

    fn assemble(&self) -> CsrMatrix {
        let dim = self.unknowns();
        let mut t: Vec<(u32, u32, f64)> = Vec::with_capacity(match self.input_lines {
            InputLines::Wired => 13 * self.n * self.m,
            _ => self.n,
        });
        // Branch between two nodes; `None` is a fixed-voltage terminal.
        let mut stamp = |a: Option<usize>, b: Option<usize>, g: f64| {
            if let Some(a) = a {
                t.push((a as u32, a as u32, g));
            }
            if let Some(b) = b {
                t.push((b as u32, b as u32, g));
            }
            if let (Some(a), Some(b)) = (a, b) {
                t.push((a as u32, b as u32, -g));
                t.push((b as u32, a as u32, -g));
            }
        };
        match self.input_lines {
            InputLines::Driven => {}
            InputLines::Lumped => {
                for i in 0..self.n {
                    stamp(Some(i), None, self.g_drive);
                    for j in 0..self.m {
                        let c = self.cell(i, j);
                        stamp(Some(i), None, c.g_pos + c.g_neg);
                    }
                }
            }
            InputLines::Wired => {
                for i in 0..self.n {
                    for j in 0..self.m {
                        let a = self.input_index(i, j);
                        let c = self.cell(i, j);
                        stamp(a, self.pos_index(i, j), c.g_pos);
                        stamp(a, self.neg_index(i, j), c.g_neg);
                        if j == 0 {
                            stamp(a, None, self.g_drive);
                        } else {
                            stamp(a, self.input_index(i, j - 1), self.g_seg);
                        }
                    }
                }
                for j in 0..self.m {
                    for i in 0..self.n {
                        let (p, q) = (self.pos_index(i, j), self.neg_index(i, j));
                        if i > 0 {
                            stamp(p, self.pos_index(i - 1, j), self.g_seg);
                            stamp(q, self.neg_index(i - 1, j), self.g_seg);
                        }
                        if i + 1 == self.n {
                            stamp(p, None, self.g_seg);
                            stamp(q, None, self.g_seg);
                        }
                    }
                }
            }
        }
        CsrMatrix::from_triplets(dim, &t)
    }

    fn check_inputs(&self, inputs: &[f64]) -> Result<(), CrossbarError> {
        if inputs.len() != self.n {
            return Err(CrossbarError::Structure(format!(
                "expected {} input voltages, got {}",
                self.n,
                inputs.len()
            )));
        }
        if let Some(k) = inputs.iter().position(|v| !v.is_finite()) {
            return Err(CrossbarError::Structure(format!("input {k} is not finite")));
        }
        Ok(())
    }

    /// Right-hand side: driver currents injected into the first node of each line.
    pub fn rhs(&self, inputs: &[f64]) -> Result<Vec<f64>, CrossbarError> {
        self.check_inputs(inputs)?;
        let mut b = vec![0.0; self.unknowns()];
        if self.input_lines != InputLines::Driven {
            for (i, &v) in inputs.iter().enumerate() {
                b[self.input_index(i, 0).unwrap()] += self.g_drive * v;
            }
        }
        Ok(b)
    }

    fn initial_guess(&self, inputs: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.unknowns()];
        match self.input_lines {
            InputLines::Wired => {
                for (i, &v) in inputs.iter().enumerate() {
                    x[i * self.m..(i + 1) * self.m].fill(v);
                }
            }
            InputLines::Lumped => x.copy_from_slice(inputs),
            InputLines::Driven => {}
        }
        x
    }

    pub fn solve(&self, inputs: &[f64], solver: &SolverConfig) -> Result<NetworkSolution, CrossbarError> {
        let b = self.rhs(inputs)?;
        let (x, iterations) = match &self.factor {
            Factor::None => (Vec::new(), 0),
            Factor::Dense(chol) => (chol.solve(&b), 0),
            Factor::Iterative(pre) => {
                let mut x = self.initial_guess(inputs);
                let out = linalg::pcg(
                    &self.matrix,
                    &b,
                    &mut x,
                    pre,
                    solver.tolerance,
                    solver.max_iterations,
                )?;
                (x, out.iterations)
            }
        };
        let residual_norm = if x.is_empty() {
            0.0
        } else {
            linalg::relative_residual(&self.matrix, &x, &b)
        };
        if residual_norm > solver.tolerance {
            return Err(SolveError::NotConverged {
                tolerance: solver.tolerance,
                iterations,
                last: residual_norm,
                history: vec![residual_norm],
            }
            .into());
        }
        Ok(self.extract(inputs, x, residual_norm, iterations))
    }

    fn v_input(&self, x: &[f64], inputs: &[f64], i: usize, j: usize) -> f64 {
        self.input_index(i, j).map_or(inputs[i], |k| x[k])
    }

    fn extract(&self, inputs: &[f64], x: Vec<f64>, residual_norm: f64, iterations: usize) -> NetworkSolution {
        let (n, m) = (self.n, self.m);
        let mut pos = vec![0.0; m];
        let mut neg = vec![0.0; m];
        let mut drivers = vec![0.0; n];
        let mut powers = BranchPowers::default();

        for i in 0..n {
            for j in 0..m {
                let c = self.cell(i, j);
                let vi = self.v_input(&x, inputs, i, j);
                let vp = self.pos_index(i, j).map_or(0.0, |k| x[k]);
                let vn = self.neg_index(i, j).map_or(0.0, |k| x[k]);
                powers.devices += c.g_pos * (vi - vp).powi(2) + c.g_neg * (vi - vn).powi(2);
                if self.input_lines != InputLines::Wired {
                    pos[j] += c.g_pos * vi;
                    neg[j] += c.g_neg * vi;
                    drivers[i] += c.g_pos * vi + c.g_neg * vi;
                }
            }
        }

        match self.input_lines {
            InputLines::Driven => {}
            InputLines::Lumped => {
                for i in 0..n {
                    let drop = inputs[i] - x[i];
                    drivers[i] = self.g_drive * drop;
                    powers.drivers += self.g_drive * drop * drop;
                }
            }
            InputLines::Wired => {
                let g = self.g_seg;
                // The first segment of an input line is lumped with its driver.
                let wire_share = self.seg.r_seg * self.g_drive;
                for i in 0..n {
                    let drop = inputs[i] - x[i * m];
                    drivers[i] = self.g_drive * drop;
                    let p = self.g_drive * drop * drop;
                    powers.input_wires += p * wire_share;
                    powers.drivers += p * (1.0 - wire_share);
                    for j in 1..m {
                        powers.input_wires += g * (x[i * m + j - 1] - x[i * m + j]).powi(2);
                    }
                }
                for j in 0..m {
                    for line in [self.pos_index(0, j).unwrap(), self.neg_index(0, j).unwrap()] {
                        for i in 1..n {
                            powers.sense_wires += g * (x[line + i - 1] - x[line + i]).powi(2);
                        }
                        powers.sense_wires += g * x[line + n - 1].powi(2);
                    }
                    pos[j] = g * x[self.pos_index(n - 1, j).unwrap()];
                    neg[j] = g * x[self.neg_index(n - 1, j).unwrap()];
                }
            }
        }

        NetworkSolution {
            sense_currents: diff_sense_all(&pos, &neg),
            node_voltages: x,
            pos_currents: pos,
            neg_currents: neg,
            driver_currents: drivers,
            residual_norm,
            iterations,
            element_powers: powers,
        }
    }

    /// Write the reduced system as `row col value` lines followed by
    /// `rhs row value` lines.
    pub fn write_triplets<W: Write>(&self, inputs: &[f64], mut out: W) -> io::Result<()> {
        writeln!(out, "# dim {} nnz {}", self.matrix.dim(), self.matrix.nnz())?;
        for (r, c, v) in self.matrix.triplets() {
            writeln!(out, "{r} {c} {v:e}")?;
        }
        let b = self
            .rhs(inputs)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
        for (r, v) in b.iter().enumerate() {
            writeln!(out, "rhs {r} {v:e}")?;
        }
        Ok(())
    }
}

/// A built network together with the input vector it is to be solved for.
#[derive(Debug, Clone)]
pub struct NetworkSystem {
    pub network: CrossbarNetwork,
    pub inputs: Vec<f64>,
    pub rhs: Vec<f64>,
}

pub fn build_network(arr: &CrossbarArray, input_voltages: &[f64]) -> Result<NetworkSystem, CrossbarError> {
    let network = CrossbarNetwork::new(arr)?;
    let rhs = network.rhs(input_voltages)?;
    Ok(NetworkSystem {
        network,
        inputs: input_voltages.to_vec(),
        rhs,
    })
}

pub fn solve_dc(system: &NetworkSystem, tolerance: f64) -> Result<NetworkSolution, CrossbarError> {
    let cfg = SolverConfig {
        tolerance,
        ..SolverConfig::default()
    };
    system.network.solve(&system.inputs, &cfg)
}

/// Per-unit static power of the peripheral circuits, in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OverheadPowers {
    pub p_amp: f64,
    pub p_neuron: f64,
    pub p_demux: f64,
    pub p_switch: f64,
}

impl Default for OverheadPowers {
    fn default() -> Self {
        Self {
            p_amp: 50e-6,
            p_neuron: 10e-6,
            p_demux: 5e-6,
            p_switch: 1e-6,
        }
    }
}

/// Peripheral unit counts charged on top of the array dissipation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeripheralUnits {
    pub amps: usize,
    pub neurons: usize,
    pub demux: usize,
    pub switches: usize,
}

impl PeripheralUnits {
    /// One amplifier and one neuron per output, no partition fabric.
    pub fn standalone(arr: &CrossbarArray) -> Self {
        Self {
            amps: arr.m_outputs,
            neurons: arr.m_outputs,
            demux: 0,
            switches: 0,
        }
    }

    pub fn power(&self, p: &OverheadPowers) -> f64 {
        self.amps as f64 * p.p_amp
            + self.neurons as f64 * p.p_neuron
            + self.demux as f64 * p.p_demux
            + self.switches as f64 * p.p_switch
    }
}

pub fn static_power(
    sol: &NetworkSolution,
    _arr: &CrossbarArray,
    overheads: &OverheadPowers,
    units: &PeripheralUnits,
) -> f64 {
    sol.element_powers.total() + units.power(overheads)
}

/// Longest Elmore delay over all input and sense lines of the array.
pub fn worst_case_delay(arr: &CrossbarArray, c_load: f64) -> f64 {
    let input_line = elmore_delay(arr.m_outputs, arr.seg.r_seg, arr.seg.c_seg, c_load);
    let sense_line = elmore_delay(arr.n_inputs, arr.seg.r_seg, arr.seg.c_seg, c_load);
    input_line.max(sense_line)
}
