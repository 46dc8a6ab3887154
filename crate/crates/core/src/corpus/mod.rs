//! Synthetic spelling-error corpus.
//!
//! Clean sentences come from a first-order Markov chain over an abstract
//! alphabet; errors are injected by replacing tokens with members of their
//! confusion set. Every sentence draws from its own seeded stream, so a
//! corpus is fully determined by its seeds and sizes.

mod confusion;
mod grammar;
mod sample;
mod vocab;

pub use confusion::ConfusionTable;
pub use grammar::{generate, generate_clean, CorpusConfig, Grammar, MarkovChain, Splits};
pub use sample::{corrupt, derive_labels, Sample};
pub use vocab::{Vocab, PAD, UNK};
