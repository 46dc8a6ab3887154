//! Training runs with on-disk outputs.
//!
//! A run directory holds `config.json`, `train_log.jsonl` (one record per
//! epoch), `checkpoint.bin` (latest parameters with optimizer state, rewritten
//! after every epoch), `best.bin` and `best.json` (best dev correction F1).

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use bidc_core::evaluation::EvalReport;
use bidc_core::model::Model;
use bidc_core::training::{Best, DevScores, EpochRecord, Observer, StepRecord, Trainer};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::config::ExperimentConfig;
use crate::data::Dataset;
use crate::error::{CliError, Result};
use crate::manifest::vocab_hash;

pub const CONFIG_FILE: &str = "config.json";
pub const LOG_FILE: &str = "train_log.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const BEST_FILE: &str = "best.bin";
pub const BEST_SUMMARY_FILE: &str = "best.json";

/// Contents of `best.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestSummary {
    pub epoch: usize,
    pub dev: DevScores,
    pub dev_report: EvalReport,
}

/// Times epochs and appends them to a JSON-lines file.
pub struct EpochLog {
    start: Instant,
    out: Option<(PathBuf, BufWriter<File>)>,
    failure: Option<CliError>,
}

impl EpochLog {
    pub fn in_memory() -> Self {
        EpochLog {
            start: Instant::now(),
            out: None,
            failure: None,
        }
    }

    /// Writes to `path`, appending when `append` is set.
    pub fn to_file(path: &Path, append: bool) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .append(append)
            .truncate(!append)
            .open(path)
            .map_err(CliError::io(path))?;
        Ok(EpochLog {
            start: Instant::now(),
            out: Some((path.to_path_buf(), BufWriter::new(file))),
            failure: None,
        })
    }

    fn finish(&mut self) -> Result<()> {
        if let Some(e) = self.failure.take() {
            return Err(e);
        }
        if let Some((path, w)) = &mut self.out {
            w.flush().map_err(CliError::io(path.as_path()))?;
        }
        Ok(())
    }
}

impl Observer for EpochLog {
    fn on_step(&mut self, r: &StepRecord) {
        log::debug!("epoch {} step {}: loss {:.5} grad norm {:.4}", r.epoch, r.step, r.loss, r.grad_norm);
    }

    fn on_epoch(&mut self, r: &mut EpochRecord) {
        r.wall_time = Some(self.start.elapsed().as_secs_f64());
        match r.dev {
            Some(d) => log::info!(
                "epoch {}: loss {:.4}, dev detection F1 {:.4}, correction F1 {:.4}",
                r.epoch,
                r.loss,
                d.detection_f1,
                d.correction_f1
            ),
            None => log::info!("epoch {}: loss {:.4}", r.epoch, r.loss),
        }
        if let Some((path, w)) = &mut self.out {
            let line = serde_json::to_string(r).expect("epoch record serializes");
            if let Err(e) = writeln!(w, "{line}").and_then(|_| w.flush()) {
                self.failure.get_or_insert(CliError::Io {
                    path: path.clone(),
                    source: e,
                });
            }
        }
    }
}

pub fn checkpoint_of(trainer: &Trainer, data: &Dataset, with_optimizer: bool) -> Checkpoint {
    Checkpoint {
        config: trainer.model.config().clone(),
        vocab: data.vocab.tokens().to_vec(),
        params: trainer.model.params().clone(),
        epochs_done: trainer.epochs_done,
        optimizer: with_optimizer.then(|| trainer.optimizer.clone()),
    }
}

/// Model stored in `ckpt` after checking that it was trained on `data`'s
/// vocabulary.
pub fn model_for(ckpt: Checkpoint, data: &Dataset) -> Result<Model> {
    let (have, want) = (vocab_hash(&ckpt.vocab), data.vocab_hash());
    if have != want {
        return Err(CliError::Compatibility(format!(
            "checkpoint vocabulary {have} does not match dataset vocabulary {want}"
        )));
    }
    Ok(Model::from_params(ckpt.config, ckpt.params)?)
}

/// Trains `cfg` on `data`. With `out`, every artifact is written there and
/// `resume` continues from an existing `checkpoint.bin`.
pub fn train_run(cfg: &ExperimentConfig, data: &Dataset, out: Option<&Path>, resume: bool) -> Result<Trainer> {
    cfg.validate()?;
    if cfg.model.vocab_size != data.vocab.len() {
        return Err(CliError::Config(format!(
            "model vocab_size {} but the dataset has {} tokens",
            cfg.model.vocab_size,
            data.vocab.len()
        )));
    }
    let Some(out) = out else {
        let mut trainer = Trainer::new(Model::new(cfg.model.clone(), cfg.train.seed)?, cfg.train.clone())?;
        let mut log = EpochLog::in_memory();
        trainer.run(&data.train, &data.dev, &mut log)?;
        return Ok(trainer);
    };
    fs::create_dir_all(out).map_err(CliError::io(out))?;
    let ckpt_path = out.join(CHECKPOINT_FILE);
    let resuming = resume && ckpt_path.exists();
    let mut trainer = if resuming {
        let ckpt = load_checkpoint(&ckpt_path)?;
        if ckpt.config != cfg.model {
            return Err(CliError::Compatibility("checkpoint model config differs from the configuration".into()));
        }
        let epochs_done = ckpt.epochs_done;
        let optimizer = ckpt
            .optimizer
            .clone()
            .ok_or_else(|| CliError::Compatibility("checkpoint has no optimizer state to resume from".into()))?;
        let model = model_for(ckpt, data)?;
        let mut t = Trainer::resume(model, cfg.train.clone(), optimizer, epochs_done)?;
        t.best = load_best(out, data)?;
        log::info!("resuming after epoch {epochs_done}");
        t
    } else {
        Trainer::new(Model::new(cfg.model.clone(), cfg.train.seed)?, cfg.train.clone())?
    };
    let config_path = out.join(CONFIG_FILE);
    fs::write(&config_path, cfg.to_json()).map_err(CliError::io(&config_path))?;
    let mut log = EpochLog::to_file(&out.join(LOG_FILE), resuming)?;
    while trainer.epochs_done < cfg.train.epochs {
        let before = trainer.best.as_ref().map(|b| b.epoch);
        trainer.run_epoch(&data.train, &data.dev, &mut log)?;
        log.finish()?;
        save_checkpoint(&ckpt_path, &checkpoint_of(&trainer, data, true))?;
        if let Some(best) = trainer.best.as_ref().filter(|b| Some(b.epoch) != before) {
            save_best(out, &trainer, best, data)?;
        }
    }
    if trainer.epochs_done == 0 {
        save_checkpoint(&ckpt_path, &checkpoint_of(&trainer, data, true))?;
    }
    Ok(trainer)
}

fn save_best(out: &Path, trainer: &Trainer, best: &Best, data: &Dataset) -> Result<()> {
    let ckpt = Checkpoint {
        config: trainer.model.config().clone(),
        vocab: data.vocab.tokens().to_vec(),
        params: best.params.clone(),
        epochs_done: best.epoch,
        optimizer: None,
    };
    save_checkpoint(&out.join(BEST_FILE), &ckpt)?;
    let model = Model::from_params(ckpt.config, ckpt.params)?;
    let dev_report = Trainer::new(model, trainer.config.clone())?.evaluate(&data.dev)?;
    let summary = BestSummary {
        epoch: best.epoch,
        dev: DevScores::from(&dev_report),
        dev_report,
    };
    let path = out.join(BEST_SUMMARY_FILE);
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(&path, text + "\n").map_err(CliError::io(&path))
}

fn load_best(out: &Path, data: &Dataset) -> Result<Option<Best>> {
    let (bin, json) = (out.join(BEST_FILE), out.join(BEST_SUMMARY_FILE));
    if !bin.exists() || !json.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&json).map_err(CliError::io(&json))?;
    let summary: BestSummary =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", json.display())))?;
    let model = model_for(load_checkpoint(&bin)?, data)?;
    Ok(Some(Best {
        epoch: summary.epoch,
        correction_f1: summary.dev.correction_f1,
        params: model.into_parts().1,
    }))
}

/// Sentence-level scores of the best-dev parameters (or the final ones when
/// no dev evaluation happened) on `split`.
pub fn evaluate_best(trainer: &Trainer, split: &[bidc_core::corpus::Sample]) -> Result<EvalReport> {
    let model = match &trainer.best {
        Some(b) => Model::from_params(trainer.model.config().clone(), b.params.clone())?,
        None => trainer.model.clone(),
    };
    Ok(Trainer::new(model, trainer.config.clone())?.evaluate(split)?)
}
