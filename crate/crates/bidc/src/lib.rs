//! Files, runs and experiments around `bidc-core`: TSV datasets, binary
//! checkpoints, JSON configs, training runs with logs, ablations and sweeps.

mod alloc_tuning;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod experiments;
pub mod manifest;
pub mod report;
pub mod runner;
pub mod tsv;

pub use alloc_tuning::tune_allocator;
