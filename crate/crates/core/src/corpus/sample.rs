use alloc::vec::Vec;

use rand::Rng;

use super::confusion::ConfusionTable;
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// Positionwise `source[i] != target[i]`.
pub fn derive_labels(source: &[usize], target: &[usize]) -> Result<Vec<u8>> {
    if source.len() != target.len() {
        return Err(Error::Alignment {
            source_len: source.len(),
            target_len: target.len(),
        });
    }
    Ok(source
        .iter()
        .zip(target)
        .map(|(s, t)| u8::from(s != t))
        .collect())
}

/// An aligned (possibly misspelled) source and its correct target. The
/// detection labels are always derived from the pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    source: Vec<usize>,
    target: Vec<usize>,
    labels: Vec<u8>,
}

impl Sample {
    pub fn new(source: Vec<usize>, target: Vec<usize>) -> Result<Self> {
        let labels = derive_labels(&source, &target)?;
        Ok(Sample {
            source,
            target,
            labels,
        })
    }

    /// A sentence without errors.
    pub fn clean(tokens: Vec<usize>) -> Self {
        let labels = alloc::vec![0; tokens.len()];
        Sample {
            source: tokens.clone(),
            target: tokens,
            labels,
        }
    }

    pub fn source(&self) -> &[usize] {
        &self.source
    }

    pub fn target(&self) -> &[usize] {
        &self.target
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    pub fn error_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }
}

/// Replaces each position of `sentence` independently with probability
/// `error_rate` by a weight-proportional confusable. Tokens without
/// confusables are left alone. The draw for sentence `index` comes from its
/// own stream under `seed`.
pub fn corrupt(sentence: &[usize], error_rate: f64, table: &ConfusionTable, seed: u64, index: u64) -> Result<Sample> {
    if !(0.0..=1.0).contains(&error_rate) {
        return Err(Error::config("error rate outside [0, 1]"));
    }
    let mut rng = rng::stream(seed, Purpose::Corruption, index);
    let source = sentence
        .iter()
        .map(|&t| {
            let u: f64 = rng.random();
            if u < error_rate {
                table.sample(t, &mut rng).unwrap_or(t)
            } else {
                t
            }
        })
        .collect();
    Sample::new(source, sentence.to_vec())
}
