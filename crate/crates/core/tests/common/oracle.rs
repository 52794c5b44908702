// SPDX-License-Identifier: Apache-2.0

//! Independent reference computations: wire formulas written out term by
//! term, and a resistor netlist solved by dense elimination.

use std::collections::HashMap;

use imcsim::crossbar::CrossbarArray;

/// Scattering-corrected resistivity written out term by term.
pub fn oracle_rho(rho0: f64, l0: f64, p: f64, r: f64, w: f64, d: f64) -> f64 {
    let fs = 1.0 + (1.0 - p) * l0 / w;
    let a = (l0 / d) * (r / (1.0 - r));
    let ms = 1.0 / (1.0 - 1.5 * a + 3.0 * a * a - 3.0 * a * a * a * (1.0 + 1.0 / a).ln());
    rho0 * (fs + ms - 1.0)
}

pub fn oracle_cap(eps: f64, w: f64, t: f64, s: f64, h: f64) -> f64 {
    let ground = 1.15 * (w / h) + 2.8 * (w / h).powf(0.222);
    let coupling = (0.03 * (w / h) + 0.83 * (t / h) - 0.07 * (t / h).powf(0.222)) * (s / h).powf(-1.34);
    eps * (ground / 2.0 + 2.0 * coupling)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Node {
    Ground,
    Source(usize),
    Input(usize, usize),
    Pos(usize, usize),
    Neg(usize, usize),
}

/// A list of resistors between named nodes.
pub struct Netlist {
    pub branches: Vec<(Node, Node, f64)>,
}

impl Netlist {
    /// Wire up the array exactly as the circuit is described: drivers feed
    /// the first bitcell of each input line through their source resistance
    /// plus one wire segment, input lines run across the outputs, sense lines
    /// run down the inputs and end one segment before the virtual ground.
    pub fn of(arr: &CrossbarArray) -> Self {
        let (n, m, r) = (arr.n_inputs, arr.m_outputs, arr.seg.r_seg);
        let mut branches = Vec::new();
        let input = |i, j| if r > 0.0 { Node::Input(i, j) } else { Node::Input(i, 0) };
        let pos = |i, j| if r > 0.0 { Node::Pos(i, j) } else { Node::Ground };
        let neg = |i, j| if r > 0.0 { Node::Neg(i, j) } else { Node::Ground };
        for i in 0..n {
            let r_drive = arr.drive_source_r + r;
            if r_drive > 0.0 {
                branches.push((Node::Source(i), input(i, 0), r_drive));
            }
            for j in 0..m {
                let cell = arr.cells[i * m + j];
                let from = if r_drive > 0.0 { input(i, j) } else { Node::Source(i) };
                branches.push((from, pos(i, j), 1.0 / cell.g_pos));
                branches.push((from, neg(i, j), 1.0 / cell.g_neg));
                if r > 0.0 && j > 0 {
                    branches.push((input(i, j - 1), input(i, j), r));
                }
            }
        }
        if r > 0.0 {
            for j in 0..m {
                for i in 1..n {
                    branches.push((Node::Pos(i - 1, j), Node::Pos(i, j), r));
                    branches.push((Node::Neg(i - 1, j), Node::Neg(i, j), r));
                }
                branches.push((Node::Pos(n - 1, j), Node::Ground, r));
                branches.push((Node::Neg(n - 1, j), Node::Ground, r));
            }
        }
        Self { branches }
    }

    /// Node voltages with sources at `inputs` and ground at 0 V.
    pub fn solve(&self, inputs: &[f64]) -> HashMap<Node, f64> {
        let fixed = |node: Node| match node {
            Node::Ground => Some(0.0),
            Node::Source(i) => Some(inputs[i]),
            _ => None,
        };
        let mut index: HashMap<Node, usize> = HashMap::new();
        for &(a, b, _) in &self.branches {
            for node in [a, b] {
                if fixed(node).is_none() && !index.contains_key(&node) {
                    index.insert(node, index.len());
                }
            }
        }
        let dim = index.len();
        let mut g = vec![vec![0.0; dim]; dim];
        let mut rhs = vec![0.0; dim];
        for &(a, b, r) in &self.branches {
            let y = 1.0 / r;
            for (p, q) in [(a, b), (b, a)] {
                if let Some(&k) = index.get(&p) {
                    g[k][k] += y;
                    match (index.get(&q), fixed(q)) {
                        (Some(&l), _) => g[k][l] -= y,
                        (None, Some(v)) => rhs[k] += y * v,
                        (None, None) => unreachable!(),
                    }
                }
            }
        }
        let x = full_pivot_solve(g, rhs);
        let mut out: HashMap<Node, f64> = index.iter().map(|(&node, &k)| (node, x[k])).collect();
        out.insert(Node::Ground, 0.0);
        for (i, &v) in inputs.iter().enumerate() {
            out.insert(Node::Source(i), v);
        }
        out
    }
}

/// Gaussian elimination with complete pivoting.
pub fn full_pivot_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    let mut col_of: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (mut pr, mut pc, mut best) = (k, k, 0.0);
        for (r, row) in a.iter().enumerate().skip(k) {
            for (c, v) in row.iter().enumerate().skip(k) {
                if v.abs() > best {
                    (pr, pc, best) = (r, c, v.abs());
                }
            }
        }
        assert!(best > 0.0, "singular oracle system");
        a.swap(k, pr);
        b.swap(k, pr);
        for row in a.iter_mut() {
            row.swap(k, pc);
        }
        col_of.swap(k, pc);
        for r in k + 1..n {
            let f = a[r][k] / a[k][k];
            if f != 0.0 {
                for c in k..n {
                    a[r][c] -= f * a[k][c];
                }
                b[r] -= f * b[k];
            }
        }
    }
    let mut y = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|c| a[k][c] * y[c]).sum();
        y[k] = (b[k] - s) / a[k][k];
    }
    let mut x = vec![0.0; n];
    for (k, &c) in col_of.iter().enumerate() {
        x[c] = y[k];
    }
    x
}

