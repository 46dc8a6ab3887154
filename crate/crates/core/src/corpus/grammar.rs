use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::confusion::ConfusionTable;
use super::sample::{corrupt, Sample};
use super::vocab::Vocab;
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// Steps walked from a uniform start before a sentence's first token is
/// emitted, so sentence starts are (very nearly) stationary.
const BURN_IN: usize = 48;

/// First-order Markov chain over the non-reserved token ids.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    vocab_size: usize,
    /// Outgoing `(next id, probability)` per token id; empty for reserved ids.
    transitions: Vec<Vec<(usize, f64)>>,
}

impl MarkovChain {
    /// Every token gets `successors` distinct successors weighted `1/rank`.
    /// A seeded cycle through all tokens supplies one successor of each, and
    /// one chord skipping a cycle step closes a cycle one shorter, which makes
    /// the chain irreducible and aperiodic. The other successors are random.
    pub fn synthetic(vocab_size: usize, successors: usize, grammar_seed: u64) -> Result<Self> {
        let n = vocab_size.saturating_sub(2);
        if n < 3 || successors < 2 || successors >= n {
            return Err(Error::config(format!(
                "cannot build a chain with {successors} successors over {n} tokens"
            )));
        }
        let mut rng = rng::stream(grammar_seed, Purpose::Grammar, 1);
        let mut cycle: Vec<usize> = (0..n).collect();
        cycle.shuffle(&mut rng);
        let mut next: Vec<Vec<usize>> = vec![Vec::with_capacity(successors); n];
        for k in 0..n {
            next[cycle[k]].push(cycle[(k + 1) % n]);
        }
        next[cycle[0]].push(cycle[2]);
        let mut pool: Vec<usize> = (0..n).collect();
        let norm: f64 = (1..=successors).map(|k| 1.0 / k as f64).sum();
        let mut transitions = vec![Vec::new(); vocab_size];
        for (r, mut list) in next.into_iter().enumerate() {
            pool.shuffle(&mut rng);
            for &c in &pool {
                if list.len() == successors {
                    break;
                }
                if c != r && !list.contains(&c) {
                    list.push(c);
                }
            }
            list.shuffle(&mut rng);
            transitions[r + 2] = list
                .into_iter()
                .enumerate()
                .map(|(rank, c)| (c + 2, 1.0 / ((rank + 1) as f64 * norm)))
                .collect();
        }
        Ok(MarkovChain {
            vocab_size,
            transitions,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn successors(&self, id: usize) -> &[(usize, f64)] {
        self.transitions.get(id).map_or(&[], Vec::as_slice)
    }

    /// Dense `[vocab × vocab]` transition probabilities.
    pub fn transition_matrix(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.vocab_size]; self.vocab_size];
        for (i, row) in self.transitions.iter().enumerate() {
            for &(j, p) in row {
                m[i][j] += p;
            }
        }
        m
    }

    fn step<R: Rng + ?Sized>(&self, from: usize, rng: &mut R) -> usize {
        let list = &self.transitions[from];
        let mut u: f64 = rng.random();
        for &(c, p) in list {
            if u < p {
                return c;
            }
            u -= p;
        }
        list[list.len() - 1].0
    }

    pub fn sample_sentence<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Vec<usize> {
        let mut cur = rng.random_range(2..self.vocab_size);
        for _ in 0..BURN_IN {
            cur = self.step(cur, rng);
        }
        let mut out = Vec::with_capacity(len);
        for i in 0..len {
            if i > 0 {
                cur = self.step(cur, rng);
            }
            out.push(cur);
        }
        out
    }
}

/// `count` clean sentences with lengths uniform in `min_len..=max_len`.
/// Sentence `i` uses its own stream under `seed`, offset by `first_index`.
pub fn generate_clean(
    chain: &MarkovChain,
    count: usize,
    min_len: usize,
    max_len: usize,
    seed: u64,
    first_index: u64,
) -> Result<Vec<Vec<usize>>> {
    if chain.vocab_size() <= 2 {
        return Err(Error::config("empty vocabulary"));
    }
    if min_len > max_len {
        return Err(Error::config("min_len exceeds max_len"));
    }
    Ok((0..count as u64)
        .map(|i| {
            let mut rng = rng::stream(seed, Purpose::CleanSentence, first_index + i);
            let len = rng.random_range(min_len..=max_len);
            chain.sample_sentence(len, &mut rng)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    /// Total vocabulary size including the two reserved ids.
    pub vocab_size: usize,
    pub confusables_min: usize,
    pub confusables_max: usize,
    pub successors: usize,
    pub grammar_seed: u64,
    pub seed: u64,
    pub error_rate: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            vocab_size: 200,
            confusables_min: 2,
            confusables_max: 5,
            successors: 2,
            grammar_seed: 0,
            seed: 0,
            error_rate: 0.15,
            min_len: 8,
            max_len: 20,
            train: 10_000,
            dev: 1_000,
            test: 1_000,
        }
    }
}

/// The generative side of a synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Grammar {
    pub vocab: Vocab,
    pub chain: MarkovChain,
    pub confusion: ConfusionTable,
}

impl Grammar {
    pub fn synthetic(cfg: &CorpusConfig) -> Result<Self> {
        Ok(Grammar {
            vocab: Vocab::synthetic(cfg.vocab_size, cfg.grammar_seed)?,
            chain: MarkovChain::synthetic(cfg.vocab_size, cfg.successors, cfg.grammar_seed)?,
            confusion: ConfusionTable::synthetic(
                cfg.vocab_size,
                cfg.confusables_min,
                cfg.confusables_max,
                cfg.grammar_seed,
            )?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Vec<Sample>,
    pub dev: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Builds the grammar and the three corrupted splits. Sentences are indexed
/// train, then dev, then test within one stream family.
pub fn generate(cfg: &CorpusConfig) -> Result<(Grammar, Splits)> {
    let grammar = Grammar::synthetic(cfg)?;
    let mut next = 0u64;
    let mut split = |count: usize| -> Result<Vec<Sample>> {
        let clean = generate_clean(&grammar.chain, count, cfg.min_len, cfg.max_len, cfg.seed, next)?;
        let out = clean
            .iter()
            .enumerate()
            .map(|(i, s)| corrupt(s, cfg.error_rate, &grammar.confusion, cfg.seed, next + i as u64))
            .collect::<Result<Vec<_>>>()?;
        next += count as u64;
        Ok(out)
    };
    let train = split(cfg.train)?;
    let dev = split(cfg.dev)?;
    let test = split(cfg.test)?;
    Ok((grammar, Splits { train, dev, test }))
}
