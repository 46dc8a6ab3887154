//! The small network and batch used for finite-difference gradient checks.

use alloc::vec::Vec;

use rand::Rng as _;

use super::{LabeledBatch, Mode, Model, ModelConfig};
use crate::corpus::Sample;
use crate::error::Result;
use crate::numeric::GradCheckReport;
use crate::rng::{self, Purpose};

pub const TINY_VOCAB: usize = 20;
pub const TINY_LEN: usize = 5;

/// Width 8, one head, one layer of each kind, 20 tokens, 5 positions.
/// Modes without interaction ignore the detection encoder and layer count.
pub fn tiny_config(mode: Mode) -> ModelConfig {
    ModelConfig {
        vocab_size: TINY_VOCAB,
        d_h: 8,
        d_ff: 16,
        n_heads: 1,
        det_depth: 1,
        cor_depth: 1,
        layers: 1,
        max_len: TINY_LEN,
        mode,
        ..Default::default()
    }
}

/// Two sentences of lengths 5 and 3 padded to 5, every other position
/// corrupted, so both heads see both label values and padding is exercised.
pub fn tiny_batch(seed: u64) -> LabeledBatch {
    let mut rng = rng::stream(seed, Purpose::Fixture, 0);
    let n = TINY_VOCAB - 2;
    let samples: Vec<Sample> = [TINY_LEN, 3]
        .iter()
        .map(|&len| {
            let target: Vec<usize> = (0..len).map(|_| rng.random_range(2..TINY_VOCAB)).collect();
            let source = target
                .iter()
                .enumerate()
                .map(|(i, &t)| if i % 2 == 0 { 2 + (t - 2 + 7) % n } else { t })
                .collect();
            Sample::new(source, target).expect("equal lengths")
        })
        .collect();
    let refs: Vec<&Sample> = samples.iter().collect();
    LabeledBatch::padded(&refs, TINY_LEN).expect("fits")
}

/// Gradient check of the tiny `mode` network initialised from `seed`.
pub fn check_tiny(mode: Mode, seed: u64, eps: f64, tol: f64) -> Result<GradCheckReport> {
    let model = Model::new(tiny_config(mode), seed)?;
    let lambda = model.config().lambda;
    model.check_gradients(&tiny_batch(seed), lambda, eps, tol)
}
