// SPDX-License-Identifier: Apache-2.0

//! Command-line front end: configuration, dataset and weight files, sweeps
//! and reports.

pub mod cli;
pub mod config;
pub mod mnist;
pub mod sweep;
pub mod weights;
