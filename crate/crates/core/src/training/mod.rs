//! Mini-batch training with AdamW and global-norm clipping.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::Sample;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, EvalReport};
use crate::model::{LabeledBatch, LossValues, Model, ModelParams};
use crate::numeric::Array;
use crate::rng::{self, Purpose};

/// Batches per length-sorting pool in [`Trainer::epoch_batches`].
pub const POOL_BATCHES: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub seed: u64,
    /// Dev evaluation period in epochs; the final epoch is always evaluated.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 32,
            learning_rate: 1e-3,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(1.0),
            seed: 0,
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |b: f64| (0.0..1.0).contains(&b);
        let positive = |x: f64| x > 0.0;
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::config("batch_size and eval_every must be positive"));
        }
        if !positive(self.learning_rate) || !positive(self.eps) || !(0.0..).contains(&self.weight_decay) {
            return Err(Error::config("learning_rate and eps must be positive, weight_decay non-negative"));
        }
        if !open_unit(self.beta1) || !open_unit(self.beta2) {
            return Err(Error::config("betas must lie in [0, 1)"));
        }
        if self.clip_norm.is_some_and(|c| !positive(c)) {
            return Err(Error::config("clip_norm must be positive"));
        }
        Ok(())
    }
}

/// AdamW moment estimates for every parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Array>,
    pub v: Vec<Array>,
    /// Number of updates applied so far.
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &[Array]) -> Self {
        let zeros = || params.iter().map(|p| Array::zeros(p.shape())).collect();
        AdamState {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }
}

/// One AdamW update with decoupled weight decay. Advances `state.t` first,
/// so the first call uses bias correction for `t = 1`. Nothing is modified
/// when any gradient is non-finite.
pub fn adamw_step(
    names: &[impl AsRef<str>],
    params: &mut [Array],
    grads: &[Array],
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::config("parameter, gradient and optimizer counts differ"));
    }
    for (i, g) in grads.iter().enumerate() {
        if g.shape() != params[i].shape() {
            return Err(Error::shape("adamw_step", params[i].shape(), g.shape()));
        }
        if !g.all_finite() {
            let name = names.get(i).map_or("?", |n| n.as_ref());
            return Err(Error::NonFiniteGradient(name.into()));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - libm::pow(cfg.beta1, t as f64);
    let c2 = 1.0 - libm::pow(cfg.beta2, t as f64);
    let (lr, wd) = (cfg.learning_rate, cfg.weight_decay);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let (p, m, v) = (p.data_mut(), m.data_mut(), v.data_mut());
        for (j, &gj) in g.data().iter().enumerate() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            p[j] = p[j] - lr * m_hat / (libm::sqrt(v_hat) + cfg.eps) - lr * wd * p[j];
        }
    }
    Ok(())
}

pub fn global_norm(grads: &[Array]) -> f64 {
    libm::sqrt(grads.iter().map(Array::sq_norm).sum())
}

/// Rescales `grads` so their global norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut [Array], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.scale_in_place(s);
        }
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    pub det_loss: Option<f64>,
    pub cor_loss: f64,
    pub grad_norm: f64,
    pub clipped_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DevScores {
    pub detection_f1: f64,
    pub correction_f1: f64,
    pub hard_detection_f1: Option<f64>,
}

impl From<&EvalReport> for DevScores {
    fn from(r: &EvalReport) -> Self {
        DevScores {
            detection_f1: r.sentence.detection.f1,
            correction_f1: r.sentence.correction.f1,
            hard_detection_f1: r.hard_detection.map(|h| h.f1),
        }
    }
}

/// Summary of one completed epoch (1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    pub loss: f64,
    pub det_loss: Option<f64>,
    pub cor_loss: f64,
    pub dev: Option<DevScores>,
    /// Seconds, filled in by an observer with access to a clock.
    pub wall_time: Option<f64>,
}

/// Hooks for logging and timing. All methods default to no-ops.
pub trait Observer {
    fn on_step(&mut self, _record: &StepRecord) {}
    fn on_epoch(&mut self, _record: &mut EpochRecord) {}
}

impl Observer for () {}

/// Best dev correction F1 seen so far and the parameters that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Best {
    pub epoch: usize,
    pub correction_f1: f64,
    pub params: ModelParams,
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Model,
    pub config: TrainConfig,
    pub optimizer: AdamState,
    pub epochs_done: usize,
    pub log: Vec<EpochRecord>,
    pub best: Option<Best>,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let optimizer = AdamState::new(model.params().values());
        Ok(Trainer {
            model,
            config,
            optimizer,
            epochs_done: 0,
            log: Vec::new(),
            best: None,
        })
    }

    /// Rebuilds a trainer from saved state after `epochs_done` epochs.
    pub fn resume(model: Model, config: TrainConfig, optimizer: AdamState, epochs_done: usize) -> Result<Self> {
        config.validate()?;
        let shapes_match = optimizer.m.len() == model.params().len()
            && optimizer.v.len() == model.params().len()
            && model
                .params()
                .values()
                .iter()
                .zip(optimizer.m.iter().zip(&optimizer.v))
                .all(|(p, (m, v))| p.shape() == m.shape() && p.shape() == v.shape());
        if !shapes_match {
            return Err(Error::config("optimizer state does not match the model parameters"));
        }
        Ok(Trainer {
            model,
            config,
            optimizer,
            epochs_done,
            log: Vec::new(),
            best: None,
        })
    }

    /// Batches of a 0-based epoch, a pure function of seed, epoch and the
    /// sentence lengths. Sentences are shuffled, then sorted by length within
    /// pools of [`POOL_BATCHES`] batches so each batch pads little, and the
    /// batches themselves are shuffled.
    pub fn epoch_batches(&self, epoch: usize, lengths: &[usize]) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..lengths.len()).collect();
        let mut rng = rng::stream(self.config.seed, Purpose::Shuffle, epoch as u64);
        order.shuffle(&mut rng);
        let bs = self.config.batch_size;
        let mut batches: Vec<Vec<usize>> = Vec::with_capacity(lengths.len().div_ceil(bs));
        for pool in order.chunks_mut(bs * POOL_BATCHES) {
            pool.sort_by_key(|&i| lengths[i]);
            batches.extend(pool.chunks(bs).map(<[usize]>::to_vec));
        }
        batches.shuffle(&mut rng);
        batches
    }

    /// One optimizer step on `batch`.
    pub fn step(&mut self, batch: &LabeledBatch) -> Result<(LossValues, f64, f64)> {
        let lambda = self.model.config().lambda;
        let (loss, mut grads) = self.model.loss_and_grads(batch, lambda)?;
        let norm = match self.config.clip_norm {
            Some(c) => clip_global_norm(&mut grads, c),
            None => global_norm(&grads),
        };
        let clipped = global_norm(&grads);
        let params = self.model.params_mut();
        let names: Vec<alloc::string::String> = params.names().to_vec();
        adamw_step(&names, params.values_mut(), &grads, &mut self.optimizer, &self.config)?;
        Ok((loss, norm, clipped))
    }

    /// Runs the next epoch; evaluates on `dev` when due and updates `best`.
    pub fn run_epoch(&mut self, train: &[Sample], dev: &[Sample], obs: &mut dyn Observer) -> Result<EpochRecord> {
        if train.is_empty() {
            return Err(Error::config("training set is empty"));
        }
        let epoch = self.epochs_done;
        let lengths: Vec<usize> = train.iter().map(Sample::len).collect();
        let (mut sum, mut sum_det, mut sum_cor, mut steps) = (0.0, 0.0, 0.0, 0usize);
        let mut any_det = false;
        for (step, chunk) in self.epoch_batches(epoch, &lengths).iter().enumerate() {
            let samples: Vec<&Sample> = chunk.iter().map(|&i| &train[i]).collect();
            let batch = LabeledBatch::padded(&samples, samples.iter().map(|s| s.len()).max().unwrap_or(0))?;
            let (loss, grad_norm, clipped_norm) = match self.step(&batch) {
                Err(Error::NonFiniteGradient(_)) => return Err(Error::Divergence { epoch: epoch + 1, step }),
                other => other?,
            };
            if !loss.total.is_finite() {
                return Err(Error::Divergence { epoch: epoch + 1, step });
            }
            sum += loss.total;
            sum_cor += loss.cor;
            if let Some(d) = loss.det {
                sum_det += d;
                any_det = true;
            }
            steps += 1;
            obs.on_step(&StepRecord {
                epoch: epoch + 1,
                step,
                loss: loss.total,
                det_loss: loss.det,
                cor_loss: loss.cor,
                grad_norm,
                clipped_norm,
            });
        }
        self.epochs_done += 1;
        let due = self.epochs_done.is_multiple_of(self.config.eval_every) || self.epochs_done == self.config.epochs;
        let dev_scores = if due && !dev.is_empty() {
            let report = self.evaluate(dev)?;
            let scores = DevScores::from(&report);
            if self.best.as_ref().is_none_or(|b| scores.correction_f1 > b.correction_f1) {
                self.best = Some(Best {
                    epoch: self.epochs_done,
                    correction_f1: scores.correction_f1,
                    params: self.model.params().clone(),
                });
            }
            Some(scores)
        } else {
            None
        };
        let n = steps as f64;
        let mut record = EpochRecord {
            epoch: self.epochs_done,
            steps,
            loss: sum / n,
            det_loss: any_det.then_some(sum_det / n),
            cor_loss: sum_cor / n,
            dev: dev_scores,
            wall_time: None,
        };
        obs.on_epoch(&mut record);
        self.log.push(record.clone());
        Ok(record)
    }

    /// Trains until `config.epochs` epochs are complete.
    pub fn run(&mut self, train: &[Sample], dev: &[Sample], obs: &mut dyn Observer) -> Result<()> {
        while self.epochs_done < self.config.epochs {
            self.run_epoch(train, dev, obs)?;
        }
        Ok(())
    }

    pub fn evaluate(&self, data: &[Sample]) -> Result<EvalReport> {
        let sources: Vec<&[usize]> = data.iter().map(Sample::source).collect();
        let preds = self.model.predict_all(&sources, self.config.batch_size.max(64))?;
        evaluate(&preds, data)
    }
}

/// Trains a fresh model from `seed`-initialised parameters. Returns the
/// finished trainer, whose `best` holds the best-dev checkpoint.
pub fn train(
    model_config: &crate::model::ModelConfig,
    train_set: &[Sample],
    dev_set: &[Sample],
    config: &TrainConfig,
    obs: &mut dyn Observer,
) -> Result<Trainer> {
    if train_set.is_empty() && config.epochs > 0 {
        return Err(Error::config(format!("cannot train {} epochs on an empty set", config.epochs)));
    }
    let model = Model::new(model_config.clone(), config.seed)?;
    let mut trainer = Trainer::new(model, config.clone())?;
    trainer.run(train_set, dev_set, obs)?;
    Ok(trainer)
}
