//! Command-line driver for the enclosure probe: configuration parsing,
//! seeded oracle checks and the per-command pipelines.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod oracles;
