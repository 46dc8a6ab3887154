use alloc::vec;
use alloc::vec::Vec;

use crate::corpus::{Sample, PAD};
use crate::error::{Error, Result};

/// Token ids of several sentences padded to a common length, flattened
/// row-major into `batch · seq_len` positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub batch: usize,
    pub seq_len: usize,
    pub ids: Vec<usize>,
    /// `true` at real tokens, `false` at padding.
    pub mask: Vec<bool>,
    pub lengths: Vec<usize>,
}

impl Batch {
    /// Pads every sequence to the longest one.
    pub fn from_sequences<S: AsRef<[usize]>>(seqs: &[S]) -> Self {
        let seq_len = seqs.iter().map(|s| s.as_ref().len()).max().unwrap_or(0);
        Self::padded(seqs, seq_len).expect("seq_len covers every sequence")
    }

    /// Pads every sequence to exactly `seq_len` positions.
    pub fn padded<S: AsRef<[usize]>>(seqs: &[S], seq_len: usize) -> Result<Self> {
        let mut ids = vec![PAD; seqs.len() * seq_len];
        let mut mask = vec![false; seqs.len() * seq_len];
        let mut lengths = Vec::with_capacity(seqs.len());
        for (b, s) in seqs.iter().enumerate() {
            let s = s.as_ref();
            if s.len() > seq_len {
                return Err(Error::Length {
                    len: s.len(),
                    max: seq_len,
                });
            }
            ids[b * seq_len..b * seq_len + s.len()].copy_from_slice(s);
            mask[b * seq_len..b * seq_len + s.len()].fill(true);
            lengths.push(s.len());
        }
        Ok(Batch {
            batch: seqs.len(),
            seq_len,
            ids,
            mask,
            lengths,
        })
    }

    pub fn rows(&self) -> usize {
        self.batch * self.seq_len
    }

    pub fn positions(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.rows()).map(move |r| r % self.seq_len.max(1))
    }

    /// Real tokens of sentence `b`.
    pub fn sentence(&self, b: usize) -> &[usize] {
        &self.ids[b * self.seq_len..b * self.seq_len + self.lengths[b]]
    }
}

/// A padded batch together with per-position training targets.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    pub inputs: Batch,
    pub det_targets: Vec<usize>,
    pub cor_targets: Vec<usize>,
}

impl LabeledBatch {
    pub fn from_samples(samples: &[&Sample]) -> Self {
        let seq_len = samples.iter().map(|s| s.len()).max().unwrap_or(0);
        Self::padded(samples, seq_len).expect("seq_len covers every sample")
    }

    pub fn padded(samples: &[&Sample], seq_len: usize) -> Result<Self> {
        let sources: Vec<&[usize]> = samples.iter().map(|s| s.source()).collect();
        let inputs = Batch::padded(&sources, seq_len)?;
        let mut det_targets = vec![0; inputs.rows()];
        let mut cor_targets = vec![PAD; inputs.rows()];
        for (b, s) in samples.iter().enumerate() {
            let base = b * seq_len;
            for (i, (&t, &l)) in s.target().iter().zip(s.labels()).enumerate() {
                cor_targets[base + i] = t;
                det_targets[base + i] = usize::from(l);
            }
        }
        Ok(LabeledBatch {
            inputs,
            det_targets,
            cor_targets,
        })
    }
}
