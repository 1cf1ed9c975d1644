//! Command-line driver for the `fairbpr` library: data preparation,
//! training, evaluation, sampler audits and cost sweeps.

pub mod cli;
pub mod commands;
pub mod config;
