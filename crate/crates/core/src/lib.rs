// SPDX-License-Identifier: Apache-2.0

//! Circuit-level simulation of fully-analog in-memory-computing DNN inference
//! with interconnect parasitics and array partitioning.

pub mod crossbar;
pub mod devices;
pub mod linalg;
pub mod parasitics;
pub mod partitioner;
pub mod pipeline;
pub mod shell;
