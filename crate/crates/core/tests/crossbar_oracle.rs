// SPDX-License-Identifier: Apache-2.0

//! Crossbar DC solutions against an independently stamped resistor netlist
//! solved by dense Gaussian elimination with full pivoting.

mod common;

use imcsim::crossbar::{
    build_network, solve_dc, static_power, CrossbarArray, CrossbarNetwork, OverheadPowers, PeripheralUnits,
    SolverConfig,
};
use imcsim::devices::SynapseCell;
use imcsim::parasitics::ParasiticSegment;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::oracle::{Netlist, Node};

fn seg(r: f64) -> ParasiticSegment {
    ParasiticSegment {
        r_seg: r,
        c_seg: 1e-16,
        ..ParasiticSegment::ideal()
    }
}

fn random_array(rng: &mut impl Rng, n: usize, m: usize, r: f64, drive: f64) -> (CrossbarArray, Vec<f64>) {
    let cells = (0..n * m)
        .map(|_| SynapseCell {
            g_pos: rng.random_range(1e-6..1e-4),
            g_neg: rng.random_range(1e-6..1e-4),
        })
        .collect();
    let arr = CrossbarArray::new(n, m, cells, seg(r)).unwrap().with_drive_source_r(drive);
    let inputs = (0..n).map(|_| rng.random_range(-0.8..0.8)).collect();
    (arr, inputs)
}

fn rel_err(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale
}

/// Compare every node and sense current of the library solution to the oracle.
fn check_against_oracle(arr: &CrossbarArray, inputs: &[f64], cfg: &SolverConfig, tol: f64) {
    let net = CrossbarNetwork::new(arr).unwrap();
    let sol = net.solve(inputs, cfg).unwrap();
    let oracle = Netlist::of(arr).solve(inputs);
    let (n, m) = (arr.n_inputs, arr.m_outputs);
    let v_scale = inputs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for i in 0..n {
        for j in 0..m {
            let checks = [
                (net.input_index(i, j), Node::Input(i, if arr.seg.r_seg > 0.0 { j } else { 0 })),
                (net.pos_index(i, j), Node::Pos(i, j)),
                (net.neg_index(i, j), Node::Neg(i, j)),
            ];
            for (k, node) in checks {
                if let Some(k) = k {
                    let want = oracle[&node];
                    assert!(
                        rel_err(sol.node_voltages[k], want, v_scale) <= tol,
                        "{node:?}: {} vs {want}",
                        sol.node_voltages[k]
                    );
                }
            }
        }
    }
    let i_scale = sol.pos_currents.iter().chain(&sol.neg_currents).fold(0.0f64, |a, v| a.max(v.abs()));
    for j in 0..m {
        let (ip, in_) = if arr.seg.r_seg > 0.0 {
            (oracle[&Node::Pos(n - 1, j)] / arr.seg.r_seg, oracle[&Node::Neg(n - 1, j)] / arr.seg.r_seg)
        } else {
            let v = |i: usize| if arr.drive_source_r > 0.0 { oracle[&Node::Input(i, 0)] } else { inputs[i] };
            (
                (0..n).map(|i| v(i) * arr.cells[i * m + j].g_pos).sum(),
                (0..n).map(|i| v(i) * arr.cells[i * m + j].g_neg).sum(),
            )
        };
        assert!(rel_err(sol.pos_currents[j], ip, i_scale) <= tol);
        assert!(rel_err(sol.neg_currents[j], in_, i_scale) <= tol);
        assert!(rel_err(sol.sense_currents[j], ip - in_, i_scale) <= tol);
    }
    assert!(sol.kcl_mismatch() <= 1e-9, "KCL mismatch {}", sol.kcl_mismatch());
}

#[test]
fn small_arrays_match_full_pivot_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for draw in 0..200 {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=4);
        let r = [0.0, 0.5, 5.0, 50.0][draw % 4];
        let drive = if draw % 3 == 0 { 0.0 } else { rng.random_range(1.0..100.0) };
        let (arr, inputs) = random_array(&mut rng, n, m, r, drive);
        check_against_oracle(&arr, &inputs, &SolverConfig::default(), 1e-9);
    }
}

/// The iterative solver stops on a residual, not an error bound, so it is
/// run to a tight residual here to show it converges to the same solution.
#[test]
fn iterative_path_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for (n, m, r, drive) in [(20, 16, 2.0, 0.0), (16, 24, 50.0, 10.0), (32, 8, 0.5, 0.0), (24, 24, 0.0, 25.0)] {
        let (arr, inputs) = random_array(&mut rng, n, m, r, drive);
        assert!(!CrossbarNetwork::new(&arr).unwrap().is_dense() || r == 0.0);
        let tight = SolverConfig { tolerance: 1e-14, ..SolverConfig::default() };
        check_against_oracle(&arr, &inputs, &tight, 1e-9);
    }
}

#[test]
fn two_by_two_matches_hand_stamps() {
    let cells = vec![
        SynapseCell { g_pos: 0.1, g_neg: 0.05 },
        SynapseCell { g_pos: 0.2, g_neg: 0.06 },
        SynapseCell { g_pos: 0.3, g_neg: 0.07 },
        SynapseCell { g_pos: 0.4, g_neg: 0.08 },
    ];
    let arr = CrossbarArray::new(2, 2, cells, seg(1.0)).unwrap();
    let sys = build_network(&arr, &[0.5, -0.25]).unwrap();
    // Unknowns: inputs (0,0) (0,1) (1,0) (1,1); positive sense lines
    // (0,0) (1,0) (0,1) (1,1); negative sense lines in the same order.
    let stamps: &[(usize, usize, f64)] = &[
        (0, 0, 2.15), (0, 1, -1.0), (0, 4, -0.1), (0, 8, -0.05),
        (1, 1, 1.26), (1, 0, -1.0), (1, 6, -0.2), (1, 10, -0.06),
        (2, 2, 2.37), (2, 3, -1.0), (2, 5, -0.3), (2, 9, -0.07),
        (3, 3, 1.48), (3, 2, -1.0), (3, 7, -0.4), (3, 11, -0.08),
        (4, 4, 1.1), (4, 0, -0.1), (4, 5, -1.0),
        (5, 5, 2.3), (5, 2, -0.3), (5, 4, -1.0),
        (6, 6, 1.2), (6, 1, -0.2), (6, 7, -1.0),
        (7, 7, 2.4), (7, 3, -0.4), (7, 6, -1.0),
        (8, 8, 1.05), (8, 0, -0.05), (8, 9, -1.0),
        (9, 9, 2.07), (9, 2, -0.07), (9, 8, -1.0),
        (10, 10, 1.06), (10, 1, -0.06), (10, 11, -1.0),
        (11, 11, 2.08), (11, 3, -0.08), (11, 10, -1.0),
    ];
    let mut want = vec![vec![0.0; 12]; 12];
    for &(r, c, v) in stamps {
        want[r][c] = v;
    }
    let got = sys.network.matrix().to_dense();
    assert_eq!(got.len(), 12);
    for r in 0..12 {
        for c in 0..12 {
            assert!((got[r][c] - want[r][c]).abs() < 1e-14, "({r}, {c}): {} vs {}", got[r][c], want[r][c]);
        }
    }
    let mut rhs = vec![0.0; 12];
    rhs[0] = 0.5;
    rhs[2] = -0.25;
    assert_eq!(sys.rhs, rhs);
    let sol = solve_dc(&sys, 1e-10).unwrap();
    assert!(sol.residual_norm <= 1e-10);
}

#[test]
fn node_count_is_three_per_cell() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (n, m) in [(1, 1), (3, 5), (7, 2)] {
        let (arr, _) = random_array(&mut rng, n, m, 1.0, 0.0);
        assert_eq!(CrossbarNetwork::new(&arr).unwrap().unknowns(), 3 * n * m);
    }
}

#[test]
fn single_cell_closed_form() {
    let arr = CrossbarArray::new(1, 1, vec![SynapseCell { g_pos: 2e-3, g_neg: 1e-3 }], seg(0.0)).unwrap();
    let sol = solve_dc(&build_network(&arr, &[0.5]).unwrap(), 1e-10).unwrap();
    assert!((sol.sense_currents[0] - 0.5e-3).abs() < 1e-18);
    // One branch of 1 V across 1 kΩ dissipates 1 mW.
    let one = CrossbarArray::new(1, 1, vec![SynapseCell { g_pos: 1e-3, g_neg: 1e-12 }], seg(0.0)).unwrap();
    let sol = solve_dc(&build_network(&one, &[1.0]).unwrap(), 1e-10).unwrap();
    assert!((sol.element_powers.total() - 1e-3).abs() < 1e-12);
    let zero = solve_dc(&build_network(&arr, &[0.0]).unwrap(), 1e-10).unwrap();
    let units = PeripheralUnits::standalone(&arr);
    let p = OverheadPowers::default();
    assert_eq!(static_power(&zero, &arr, &p, &units), p.p_amp + p.p_neuron);
}

#[test]
fn ideal_wires_give_exact_dot_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (n, m) in [(1, 1), (8, 3), (17, 33), (64, 64)] {
        let (arr, inputs) = random_array(&mut rng, n, m, 0.0, 0.0);
        let sol = solve_dc(&build_network(&arr, &inputs).unwrap(), 1e-10).unwrap();
        for j in 0..m {
            let want: f64 = (0..n).map(|i| inputs[i] * (arr.cell(i, j).g_pos - arr.cell(i, j).g_neg)).sum();
            let scale: f64 = (0..n).map(|i| (inputs[i] * arr.cell(i, j).g_pos).abs()).sum();
            assert!((sol.sense_currents[j] - want).abs() <= 1e-10 * scale.max(want.abs()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Wire resistance only ever loses drive on every single-ended line.
    #[test]
    fn ir_drop_never_adds_current(seed in any::<u64>(), n in 1usize..=8, m in 1usize..=8, r in 0.1f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (wired, _) = random_array(&mut rng, n, m, r, 0.0);
        let inputs: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.8)).collect();
        let ideal = CrossbarArray { seg: seg(0.0), ..wired.clone() };
        let cfg = SolverConfig::default();
        let a = CrossbarNetwork::new(&wired).unwrap().solve(&inputs, &cfg).unwrap();
        let b = CrossbarNetwork::new(&ideal).unwrap().solve(&inputs, &cfg).unwrap();
        for j in 0..m {
            prop_assert!(a.pos_currents[j] <= b.pos_currents[j] + 1e-12);
            prop_assert!(a.neg_currents[j] <= b.neg_currents[j] + 1e-12);
        }
        prop_assert!(a.kcl_mismatch() <= 1e-9);
    }

    /// With every line driven at one voltage the total current is that
    /// voltage times the network's effective conductance, which can only
    /// fall as any series resistance grows.
    #[test]
    fn total_current_falls_with_segment_resistance(seed in any::<u64>(), n in 1usize..=8, m in 1usize..=8, r in 0.1f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (arr, _) = random_array(&mut rng, n, m, r, 0.0);
        let inputs = vec![0.5; n];
        let cfg = SolverConfig::default();
        let total = |r: f64| {
            let a = CrossbarArray { seg: seg(r), ..arr.clone() };
            let s = CrossbarNetwork::new(&a).unwrap().solve(&inputs, &cfg).unwrap();
            s.pos_currents.iter().chain(&s.neg_currents).sum::<f64>()
        };
        prop_assert!(total(2.0 * r) <= total(r) * (1.0 + 1e-12));
    }
}

#[test]
fn full_size_array_solves() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (arr, inputs) = random_array(&mut rng, 512, 512, 2.128, 0.0);
    let net = CrossbarNetwork::new(&arr).unwrap();
    assert_eq!(net.unknowns(), 3 * 512 * 512);
    // Sparse storage: a bounded number of entries per node.
    assert!(net.matrix().nnz() <= 5 * net.unknowns());
    let sol = net.solve(&inputs, &SolverConfig::default()).unwrap();
    assert!(sol.residual_norm <= 1e-10);
    assert!(sol.kcl_mismatch() <= 1e-9);
    assert!(sol.sense_currents.iter().all(|c| c.is_finite()));
}
