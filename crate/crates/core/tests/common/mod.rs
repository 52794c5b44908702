// SPDX-License-Identifier: Apache-2.0

//! Paths and configuration shared by the integration tests.

#![allow(dead_code)]

pub mod oracle;

use std::path::PathBuf;

use imcsim::pipeline::DnnModel;
use imcsim::shell::config::RunConfig;
use imcsim::shell::mnist::{Dataset, Split};
use imcsim::shell::weights::load_weights;

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// MNIST IDX directory: `IMCSIM_MNIST_DIR` if set, else `data/mnist` in the workspace.
pub fn mnist_dir() -> PathBuf {
    std::env::var_os("IMCSIM_MNIST_DIR").map_or_else(|| workspace_root().join("data/mnist"), PathBuf::from)
}

pub fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/reference.imcw")
}

/// The shipped default configuration with paths resolved for tests.
pub fn run_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.dataset.dir = mnist_dir();
    cfg.model.weights = fixture_path();
    cfg
}

pub fn fixture() -> DnnModel {
    load_weights(&fixture_path()).expect("reference weight fixture")
}

pub fn test_images(range: std::ops::Range<usize>) -> Dataset {
    let cfg = run_config();
    cfg.dataset
        .load(Split::Test)
        .unwrap_or_else(|e| panic!("MNIST test split not found in {} ({e}); set IMCSIM_MNIST_DIR", mnist_dir().display()))
        .slice(range)
}
