use std::fs;
use std::path::Path;

use bidc_core::corpus::CorpusConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Written beside every generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub grammar_seed: u64,
    pub seed: u64,
    pub error_rate: f64,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub vocab_hash: String,
    pub vocab: Vec<String>,
    pub corpus: CorpusConfig,
}

impl Manifest {
    pub fn new(corpus: &CorpusConfig, vocab: &[String]) -> Self {
        Manifest {
            grammar_seed: corpus.grammar_seed,
            seed: corpus.seed,
            error_rate: corpus.error_rate,
            train: corpus.train,
            dev: corpus.dev,
            test: corpus.test,
            vocab_hash: vocab_hash(vocab),
            vocab: vocab.to_vec(),
            corpus: corpus.clone(),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text).map_err(CliError::io(&path))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(CliError::io(&path))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if m.vocab_hash != vocab_hash(&m.vocab) {
            return Err(CliError::Data(format!("{}: vocabulary does not match its hash", path.display())));
        }
        Ok(m)
    }
}

/// SHA-256 over the tokens, each followed by a newline, as lowercase hex.
pub fn vocab_hash(tokens: &[String]) -> String {
    let mut h = Sha256::new();
    for t in tokens {
        h.update(t.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}
