use std::fs;
use std::path::{Path, PathBuf};

use bidc_core::corpus::CorpusConfig;
use bidc_core::model::ModelConfig;
use bidc_core::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Sentences per inference batch.
    pub batch_size: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { batch_size: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Values for each gate axis of the gate grid.
    pub gates: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub layers: Vec<usize>,
    /// Seeds for ablation runs.
    pub seeds: Vec<u64>,
    /// Train once with learned gates and apply the overrides at inference.
    pub inference_only: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            gates: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            lambdas: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            layers: vec![1, 2, 3, 4],
            seeds: vec![0, 1, 2],
            inference_only: false,
        }
    }
}

/// One experiment, fully described.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct ExperimentConfig {
    /// Directory with `train.tsv`, `dev.tsv`, `test.tsv` and a manifest. When
    /// absent the synthetic corpus described by `corpus` is generated in
    /// memory.
    pub data_dir: Option<PathBuf>,
    pub corpus: CorpusConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub sweep: SweepConfig,
}


impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.corpus;
        let bad = |m: String| Err(CliError::Config(m));
        if !(0.0..=1.0).contains(&c.error_rate) {
            return bad(format!("corpus.error_rate = {} outside [0, 1]", c.error_rate));
        }
        if c.min_len == 0 || c.min_len > c.max_len {
            return bad("corpus lengths need 1 <= min_len <= max_len".into());
        }
        if c.max_len > self.model.max_len {
            return bad(format!(
                "corpus.max_len = {} exceeds model.max_len = {}",
                c.max_len, self.model.max_len
            ));
        }
        if self.data_dir.is_none() && c.vocab_size != self.model.vocab_size {
            return bad(format!(
                "corpus.vocab_size = {} differs from model.vocab_size = {}",
                c.vocab_size, self.model.vocab_size
            ));
        }
        self.model.validate()?;
        self.train.validate()?;
        if self.eval.batch_size == 0 {
            return bad("eval.batch_size must be positive".into());
        }
        let s = &self.sweep;
        if s.gates.iter().chain(&s.lambdas).any(|v| !(0.0..=1.0).contains(v)) {
            return bad("gate and lambda grid values must lie in [0, 1]".into());
        }
        if s.layers.contains(&0) {
            return bad("layer grid values must be at least 1".into());
        }
        Ok(())
    }
}
