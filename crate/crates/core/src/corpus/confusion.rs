use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::vocab::{PAD, UNK};
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// Per-token lists of plausible wrong substitutes with positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionTable {
    entries: Vec<Vec<(usize, f64)>>,
}

impl ConfusionTable {
    /// `entries[id]` lists the confusables of token `id`; an empty list means
    /// the token is never corrupted.
    pub fn new(vocab_size: usize, entries: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        if entries.len() != vocab_size {
            return Err(Error::config("confusion table must have one entry per token"));
        }
        for (id, list) in entries.iter().enumerate() {
            if (id == PAD || id == UNK) && !list.is_empty() {
                return Err(Error::config("reserved tokens cannot have confusables"));
            }
            for &(c, w) in list {
                if c >= vocab_size || c == PAD || c == UNK || c == id {
                    return Err(Error::config(format!("invalid confusable {c} for token {id}")));
                }
                if !(w.is_finite() && w > 0.0) {
                    return Err(Error::config(format!("invalid weight {w} for token {id}")));
                }
            }
        }
        Ok(ConfusionTable { entries })
    }

    /// Between `min` and `max` distinct confusables per non-reserved token,
    /// weighted `1/rank`.
    pub fn synthetic(vocab_size: usize, min: usize, max: usize, grammar_seed: u64) -> Result<Self> {
        let real = vocab_size.saturating_sub(2);
        if min == 0 || min > max || max >= real {
            return Err(Error::config(format!(
                "confusion set size range {min}..={max} invalid for {real} tokens"
            )));
        }
        let mut rng = rng::stream(grammar_seed, Purpose::Grammar, 2);
        let mut entries = alloc::vec![Vec::new(); vocab_size];
        let mut pool: Vec<usize> = (2..vocab_size).collect();
        for (id, entry) in entries.iter_mut().enumerate().skip(2) {
            let k = rng.random_range(min..=max);
            pool.shuffle(&mut rng);
            *entry = pool
                .iter()
                .copied()
                .filter(|&c| c != id)
                .take(k)
                .enumerate()
                .map(|(rank, c)| (c, 1.0 / (rank + 1) as f64))
                .collect();
        }
        Self::new(vocab_size, entries)
    }

    pub fn vocab_size(&self) -> usize {
        self.entries.len()
    }

    pub fn confusables(&self, id: usize) -> &[(usize, f64)] {
        self.entries.get(id).map_or(&[], Vec::as_slice)
    }

    /// Weight-proportional draw from the confusion set of `id`.
    pub fn sample<R: Rng + ?Sized>(&self, id: usize, rng: &mut R) -> Option<usize> {
        let list = self.confusables(id);
        if list.is_empty() {
            return None;
        }
        let total: f64 = list.iter().map(|&(_, w)| w).sum();
        let mut u = rng.random::<f64>() * total;
        for &(c, w) in list {
            if u < w {
                return Some(c);
            }
            u -= w;
        }
        list.last().map(|&(c, _)| c)
    }
}
