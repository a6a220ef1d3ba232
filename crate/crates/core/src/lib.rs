//! Planning toolkit for training-data acquisition.
//!
//! Short annealing runs measure how much a data source improves a model over
//! a full-replay baseline. This crate turns those measurements into
//! utility-vs-compute scaling laws and budget decisions:
//!
//! - [`cost`]: FLOPs accounting for training, generation and filtering.
//! - [`metrics`]: Brier / exact-match scores and improvement deltas.
//! - [`ingest`]: experiment manifests and baseline pairing.
//! - [`scaling`]: log-linear utility fits, crossovers, budget ranking.
//! - [`allocate`]: multi-source budget splits.
//! - [`diversity`]: streaming n-gram diversity statistics.
//! - [`simulate`]: synthetic manifests from known scaling laws.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocate;
pub mod cost;
pub mod diversity;
pub mod ingest;
pub mod metrics;
pub mod scaling;
pub mod simulate;
