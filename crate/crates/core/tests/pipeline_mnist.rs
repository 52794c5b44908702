// SPDX-License-Identifier: Apache-2.0

//! End-to-end inference on MNIST test images with the reference weights.

mod common;

use std::time::Instant;

use imcsim::devices::{logistic, ConductanceRange};
use imcsim::parasitics::ParasiticSegment;
use imcsim::partitioner::plan_partitions;
use imcsim::pipeline::{
    evaluate, forward_layer, reference_accuracy, CompiledNetwork, LayerWeights, SimConfig,
};
use imcsim::shell::config::Layout;

const FINE: [(usize, usize); 3] = [(16, 8), (8, 8), (8, 1)];

fn ideal_wires(layout: Layout) -> SimConfig {
    common::run_config().sim_config(layout).unwrap().with_seg(ParasiticSegment::ideal())
}

#[test]
fn classification_is_plan_independent_without_parasitics() {
    let model = common::fixture();
    let data = common::test_images(0..200);
    let cfg = ideal_wires(Layout::Ideal);
    let shapes = model.layer_shapes();
    let (_, reference) = reference_accuracy(&model, &cfg, &data).unwrap();
    let plans = [
        plan_partitions(&shapes, 512, None).unwrap(),
        plan_partitions(&shapes, 128, None).unwrap(),
        plan_partitions(&shapes, 64, None).unwrap(),
        plan_partitions(&shapes, 32, None).unwrap(),
        plan_partitions(&shapes, 32, Some(&FINE)).unwrap(),
    ];
    for plan in &plans {
        let r = evaluate(&model, plan, &cfg, &data).unwrap();
        assert_eq!(r.images_evaluated, 200);
        assert_eq!(r.predictions, reference, "plan {:?} / {:?}", plan.h_p(), plan.v_p());
    }
}

#[test]
fn accuracy_does_not_improve_with_wire_resistance() {
    let model = common::fixture();
    let data = common::test_images(0..200);
    let base = common::run_config().sim_config(Layout::Ideal).unwrap();
    let plan = plan_partitions(&model.layer_shapes(), 64, None).unwrap();
    let mut previous = f64::INFINITY;
    for factor in [0.0, 1.0, 10.0, 100.0] {
        let cfg = base.with_seg(base.seg.scaled(factor));
        let r = evaluate(&model, &plan, &cfg, &data).unwrap();
        assert!(
            r.top1_accuracy <= previous + 0.01,
            "{factor}x wire resistance: {} after {previous}",
            r.top1_accuracy
        );
        previous = r.top1_accuracy;
    }
}

#[test]
fn voltages_stay_within_rails() {
    let model = common::fixture();
    let data = common::test_images(200..260);
    let run = common::run_config();
    for (layout, size, scale) in [(Layout::Ideal, 32, 1.0), (Layout::NonIdeal, 64, 1.0), (Layout::Ideal, 512, 100.0)] {
        let base = run.sim_config(layout).unwrap();
        let cfg = base.with_seg(base.seg.scaled(scale));
        let plan = plan_partitions(&model.layer_shapes(), size, None).unwrap();
        let r = evaluate(&model, &plan, &cfg, &data).unwrap();
        let (lo, hi) = r.voltage_span;
        assert!(lo >= cfg.neuron.v_ss && hi <= cfg.neuron.v_dd, "{layout} A={size}: [{lo}, {hi}]");
    }
}

#[test]
fn finest_plan_meets_throughput() {
    let model = common::fixture();
    let data = common::test_images(0..40);
    let cfg = common::run_config().sim_config(Layout::Ideal).unwrap();
    let plan = plan_partitions(&model.layer_shapes(), 32, Some(&FINE)).unwrap();
    let start = Instant::now();
    let r = evaluate(&model, &plan, &cfg, &data).unwrap();
    let rate = r.images_evaluated as f64 / start.elapsed().as_secs_f64();
    assert!(rate >= 5.0, "{rate:.1} images/s");
}

#[test]
fn more_partitions_cost_more_power() {
    let model = common::fixture();
    let data = common::test_images(0..20);
    let cfg = common::run_config().sim_config(Layout::Ideal).unwrap();
    let shapes = model.layer_shapes();
    let coarse = evaluate(&model, &plan_partitions(&shapes, 32, None).unwrap(), &cfg, &data).unwrap();
    let fine = evaluate(&model, &plan_partitions(&shapes, 32, Some(&FINE)).unwrap(), &cfg, &data).unwrap();
    assert!(fine.power_estimate > coarse.power_estimate);
}

#[test]
fn blank_image_is_deterministic() {
    let model = common::fixture();
    let cfg = common::run_config().sim_config(Layout::Ideal).unwrap();
    let plan = plan_partitions(&model.layer_shapes(), 32, None).unwrap();
    let net = CompiledNetwork::new(&model, &plan, &cfg).unwrap();
    let a = net.run_image(&[0.0; 400]).unwrap();
    let b = net.run_image(&[0.0; 400]).unwrap();
    assert_eq!(a.outputs, b.outputs);
    assert_eq!(a.outputs.len(), 10);
}

#[test]
fn single_synapse_layer_is_a_logistic_of_one_product() {
    let cfg = SimConfig {
        conductance: ConductanceRange { g_min: 1e-6, g_max: 1e-4, levels: None },
        ..SimConfig::default()
    };
    let layer = LayerWeights::from_trained(1, 1, false, &[-0.7]);
    let plan = plan_partitions(&[(1, 1)], 1, None).unwrap();
    let v = forward_layer(&[0.5], &layer, &plan.layers[0], 1, &cfg).unwrap();
    // The per-layer scale is folded into the transimpedance, so the neuron
    // sees the trained pre-activation 0.5 · (-0.7).
    let n = cfg.neuron;
    let want = n.v_ss + (n.v_dd - n.v_ss) * logistic(-n.gain_k * (0.5 * -0.7 - n.midpoint_vm));
    assert!((v[0] - want).abs() < 1e-12, "{} vs {want}", v[0]);
}
