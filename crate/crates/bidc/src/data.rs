//! Datasets on disk and in memory.

use std::fs;
use std::path::Path;

use bidc_core::corpus::{generate, CorpusConfig, Sample, Vocab};

use crate::error::{CliError, Result};
use crate::manifest::{vocab_hash, Manifest, MANIFEST_FILE};
use crate::tsv::{load_tsv, save_tsv};

pub const SPLITS: [&str; 3] = ["train", "dev", "test"];

/// Three splits over one vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub vocab: Vocab,
    pub train: Vec<Sample>,
    pub dev: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Dataset {
    /// The synthetic corpus described by `cfg`.
    pub fn synthetic(cfg: &CorpusConfig) -> Result<Self> {
        let (grammar, splits) = generate(cfg)?;
        Ok(Dataset {
            vocab: grammar.vocab,
            train: splits.train,
            dev: splits.dev,
            test: splits.test,
        })
    }

    /// Reads `train.tsv`, `dev.tsv` and `test.tsv` from `dir`. The vocabulary
    /// comes from the manifest when there is one and is otherwise collected
    /// from the characters of all three files.
    pub fn load(dir: &Path) -> Result<Self> {
        let vocab = if dir.join(MANIFEST_FILE).exists() {
            Vocab::from_stored(Manifest::load(dir)?.vocab)?
        } else {
            let mut texts = Vec::new();
            for split in SPLITS {
                let path = split_path(dir, split);
                texts.push(fs::read_to_string(&path).map_err(CliError::io(&path))?);
            }
            Vocab::from_chars(texts.iter().flat_map(|t| t.lines()).flat_map(|l| l.split('\t')))
        };
        let load = |split| load_tsv(&split_path(dir, split), &vocab).map(|p| p.samples);
        Ok(Dataset {
            train: load("train")?,
            dev: load("dev")?,
            test: load("test")?,
            vocab,
        })
    }

    pub fn split(&self, name: &str) -> Result<&[Sample]> {
        match name {
            "train" => Ok(&self.train),
            "dev" => Ok(&self.dev),
            "test" => Ok(&self.test),
            other => Err(CliError::Usage(format!("unknown split {other:?}; expected train, dev or test"))),
        }
    }

    pub fn vocab_hash(&self) -> String {
        vocab_hash(self.vocab.tokens())
    }
}

pub fn split_path(dir: &Path, split: &str) -> std::path::PathBuf {
    dir.join(format!("{split}.tsv"))
}

/// Generates the corpus of `cfg` and writes the three splits and the
/// manifest into `dir`.
pub fn write_dataset(dir: &Path, cfg: &CorpusConfig) -> Result<Manifest> {
    let data = Dataset::synthetic(cfg)?;
    fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    for split in SPLITS {
        save_tsv(&split_path(dir, split), data.split(split)?, &data.vocab)?;
    }
    let manifest = Manifest::new(cfg, data.vocab.tokens());
    manifest.save(dir)?;
    Ok(manifest)
}
