// SPDX-License-Identifier: Apache-2.0

//! Sparse SPD linear algebra for resistive networks.
//!
//! [`CsrMatrix`] stores the reduced nodal conductance matrix. Systems are
//! solved by preconditioned conjugate gradients with a tridiagonal
//! preconditioner: with crossbar nodes numbered line by line, the tridiagonal
//! band holds every wire segment, so the preconditioner solves each line
//! exactly and leaves only device coupling to the outer iteration. Small
//! systems are factorized densely instead.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("conjugate gradient did not reach {tolerance:e} in {iterations} iterations (last residual {last:e})")]
    NotConverged {
        tolerance: f64,
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },
    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Assemble a square matrix from `(row, col, value)` triplets. Duplicates
    /// are summed.
    pub fn from_triplets(n: usize, triplets: &[(u32, u32, f64)]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(r, _, _) in triplets {
            counts[r as usize + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0u32; triplets.len()];
        let mut vals = vec![0f64; triplets.len()];
        for &(r, c, v) in triplets {
            let slot = next[r as usize];
            cols[slot] = c;
            vals[slot] = v;
            next[r as usize] += 1;
        }

        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut scratch: Vec<(u32, f64)> = Vec::new();
        for i in 0..n {
            scratch.clear();
            scratch.extend((counts[i]..counts[i + 1]).map(|k| (cols[k], vals[k])));
            scratch.sort_unstable_by_key(|e| e.0);
            for &(c, v) in &scratch {
                if col_idx.len() > row_ptr[i] && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        self.col_idx[range.clone()]
            .binary_search(&(col as u32))
            .map(|k| self.values[range.start + k])
            .unwrap_or(0.0)
    }

    /// Iterate over stored entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1])
                .map(move |k| (r, self.col_idx[k] as usize, self.values[k]))
        })
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k] as usize];
            }
            *out = acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (r, c, v) in self.triplets() {
            d[r][c] += v;
        }
        d
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// ‖b − A·x‖ / ‖b‖, or ‖A·x‖ when `b` is zero.
pub fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    let r: f64 = ax
        .iter()
        .zip(b)
        .map(|(p, q)| (q - p) * (q - p))
        .sum::<f64>()
        .sqrt();
    let nb = norm2(b);
    if nb > 0.0 {
        r / nb
    } else {
        r
    }
}

/// LDLᵀ factorization of the tridiagonal band of an SPD matrix.
#[derive(Debug, Clone)]
pub struct TridiagonalPreconditioner {
    /// Inverse pivots.
    inv_d: Vec<f64>,
    /// Unit lower multipliers, `lower[k]` couples rows `k` and `k + 1`.
    lower: Vec<f64>,
}

impl TridiagonalPreconditioner {
    pub fn new(a: &CsrMatrix) -> Result<Self, SolveError> {
        let n = a.dim();
        let mut inv_d = vec![0.0; n];
        let mut lower = vec![0.0; n.saturating_sub(1)];
        let mut prev_off = 0.0;
        let mut prev_d = 1.0;
        for k in 0..n {
            let diag = a.get(k, k);
            let d = if k == 0 {
                diag
            } else {
                diag - prev_off * prev_off / prev_d
            };
            if !(d > 0.0) {
                return Err(SolveError::NotPositiveDefinite { row: k, pivot: d });
            }
            inv_d[k] = 1.0 / d;
            if k + 1 < n {
                let off = a.get(k, k + 1);
                lower[k] = off / d;
                prev_off = off;
            }
            prev_d = d;
        }
        Ok(Self { inv_d, lower })
    }

    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = r.len();
        if n == 0 {
            return;
        }
        z[0] = r[0];
        for k in 1..n {
            z[k] = r[k] - self.lower[k - 1] * z[k - 1];
        }
        for k in 0..n {
            z[k] *= self.inv_d[k];
        }
        for k in (0..n - 1).rev() {
            z[k] -= self.lower[k] * z[k + 1];
        }
    }
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub iterations: usize,
    pub residual: f64,
}

/// Preconditioned conjugate gradients. `x` holds the initial guess on entry
/// and the solution on success. Convergence is declared on the true relative
/// residual ‖b − A·x‖/‖b‖.
pub fn pcg(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    precond: &TridiagonalPreconditioner,
    tolerance: f64,
    max_iterations: usize,
) -> Result<CgOutcome, SolveError> {
    let n = a.dim();
    if b.len() != n || x.len() != n {
        return Err(SolveError::Dimension {
            expected: n,
            actual: b.len().min(x.len()),
        });
    }
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        x.fill(0.0);
        return Ok(CgOutcome {
            iterations: 0,
            residual: 0.0,
        });
    }

    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut history = Vec::new();
    let mut iterations = 0;

    // Outer loop restarts from the true residual if the recurrence drifted.
    loop {
        a.mul_vec_into(x, &mut ap);
        for k in 0..n {
            r[k] = b[k] - ap[k];
        }
        let true_res = norm2(&r) / b_norm;
        history.push(true_res);
        if true_res <= tolerance {
            return Ok(CgOutcome {
                iterations,
                residual: true_res,
            });
        }
        if iterations >= max_iterations {
            return Err(SolveError::NotConverged {
                tolerance,
                iterations,
                last: true_res,
                history,
            });
        }

        precond.apply(&r, &mut z);
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        while iterations < max_iterations {
            a.mul_vec_into(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                return Err(SolveError::NotPositiveDefinite {
                    row: iterations,
                    pivot: pap,
                });
            }
            let alpha = rz / pap;
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            iterations += 1;
            let res = norm2(&r) / b_norm;
            if res <= 0.5 * tolerance {
                break;
            }
            precond.apply(&r, &mut z);
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }
    }
}

/// Dense Cholesky factor `L` with `A = L·Lᵀ`, stored row-major lower triangle.
#[derive(Debug, Clone)]
pub struct DenseCholesky {
    n: usize,
    l: Vec<f64>,
}

impl DenseCholesky {
    pub fn new(a: &CsrMatrix) -> Result<Self, SolveError> {
        let n = a.dim();
        let mut l = vec![0.0; n * n];
        for (r, c, v) in a.triplets() {
            if c <= r {
                l[r * n + c] += v;
            }
        }
        for j in 0..n {
            let mut d = l[j * n + j];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > 0.0) {
                return Err(SolveError::NotPositiveDefinite { row: j, pivot: d });
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in j + 1..n {
                let mut s = l[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        Ok(Self { n, l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize, shunt: f64) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i as u32, i as u32, 2.0 + shunt));
            if i + 1 < n {
                t.push((i as u32, i as u32 + 1, -1.0));
                t.push((i as u32 + 1, i as u32, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, &t)
    }

    #[test]
    fn triplets_are_merged_and_sorted() {
        let m = CsrMatrix::from_triplets(2, &[(1, 1, 1.0), (0, 1, 2.0), (1, 1, 3.0), (0, 0, 5.0)]);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(1, 1), 4.0);
        assert_eq!(m.get(1, 0), 0.0);
        assert_eq!(m.triplets().collect::<Vec<_>>(), vec![(0, 0, 5.0), (0, 1, 2.0), (1, 1, 4.0)]);
    }

    #[test]
    fn tridiagonal_preconditioner_is_exact_on_tridiagonal() {
        let a = laplacian_1d(50, 0.01);
        let b: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let p = TridiagonalPreconditioner::new(&a).unwrap();
        let mut x = vec![0.0; 50];
        p.apply(&b, &mut x);
        assert!(relative_residual(&a, &x, &b) < 1e-13);
        let mut x = vec![0.0; 50];
        let out = pcg(&a, &b, &mut x, &p, 1e-12, 10).unwrap();
        assert!(out.iterations <= 2);
    }

    #[test]
    fn pcg_matches_cholesky() {
        // 2-D grid Laplacian, not tridiagonal.
        let side = 12;
        let n = side * side;
        let mut t = Vec::new();
        for r in 0..side {
            for c in 0..side {
                let i = (r * side + c) as u32;
                t.push((i, i, 4.1));
                if c + 1 < side {
                    t.push((i, i + 1, -1.0));
                    t.push((i + 1, i, -1.0));
                }
                if r + 1 < side {
                    t.push((i, i + side as u32, -1.0));
                    t.push((i + side as u32, i, -1.0));
                }
            }
        }
        let a = CsrMatrix::from_triplets(n, &t);
        let b: Vec<f64> = (0..n).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let chol = DenseCholesky::new(&a).unwrap();
        let direct = chol.solve(&b);
        assert!(relative_residual(&a, &direct, &b) < 1e-13);
        let mut x = vec![0.0; n];
        let p = TridiagonalPreconditioner::new(&a).unwrap();
        let out = pcg(&a, &b, &mut x, &p, 1e-11, 500).unwrap();
        assert!(out.residual <= 1e-11);
        for (u, v) in x.iter().zip(&direct) {
            assert!((u - v).abs() <= 1e-9 * v.abs().max(1.0));
        }
    }

    #[test]
    fn non_convergence_reports_history() {
        let a = CsrMatrix::from_triplets(3, &[(0, 0, 2.0), (0, 2, -1.0), (2, 0, -1.0), (1, 1, 1.0), (2, 2, 2.0)]);
        let p = TridiagonalPreconditioner::new(&a).unwrap();
        let mut x = vec![0.0; 3];
        let err = pcg(&a, &[1.0, 1.0, 1.0], &mut x, &p, 1e-30, 1).unwrap_err();
        match err {
            SolveError::NotConverged { history, iterations, .. } => {
                assert_eq!(iterations, 1);
                assert!(!history.is_empty());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn indefinite_is_rejected() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        assert!(matches!(DenseCholesky::new(&a), Err(SolveError::NotPositiveDefinite { .. })));
        assert!(matches!(TridiagonalPreconditioner::new(&a), Err(SolveError::NotPositiveDefinite { .. })));
    }
}
