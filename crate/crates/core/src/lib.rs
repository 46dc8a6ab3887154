//! Bi-directional detector-corrector spelling check.
//!
//! This crate is the allocation-only core: a small reverse-mode autodiff
//! engine over dense `f64` matrices, the detector-corrector network with its
//! bi-directional interaction layers, a confusion-set corpus generator,
//! an AdamW training loop and the sentence/character level metric suite.
//! File formats, the CLI and experiment drivers live in the `bidc` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod numeric;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
