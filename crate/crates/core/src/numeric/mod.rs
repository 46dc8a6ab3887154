//! Dense `f64` arrays and a tape-based reverse-mode autodiff graph.
//!
//! A [`Graph`] is an append-only tape: every operation pushes one node whose
//! parents already exist, so walking the tape backwards is a reverse
//! topological order and [`Graph::backward`] touches each node once.

mod array;
mod gradcheck;
mod graph;
mod kernels;

pub use array::Array;
pub use gradcheck::{grad_check, relative_error, GradCheckReport, ParamCheck, Probe};
pub use graph::{AttentionLayout, Graph, NodeId};
