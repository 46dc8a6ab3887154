use bidc_core::corpus::{generate, CorpusConfig, Sample};
use bidc_core::model::{Mode, Model, ModelConfig};
use bidc_core::training::{train, EpochRecord, Observer, StepRecord, TrainConfig, Trainer};
use bidc_core::Error;

fn corpus() -> (Vec<Sample>, Vec<Sample>) {
    let cfg = CorpusConfig { vocab_size: 24, train: 96, dev: 24, test: 0, min_len: 3, max_len: 8, ..Default::default() };
    let (_, splits) = generate(&cfg).unwrap();
    (splits.train, splits.dev)
}

fn model_config(mode: Mode) -> ModelConfig {
    let interacts = matches!(mode, Mode::BiDc | Mode::D2c);
    ModelConfig {
        vocab_size: 24,
        d_h: 8,
        d_ff: 12,
        n_heads: 2,
        det_depth: usize::from(interacts),
        cor_depth: 1,
        layers: usize::from(interacts),
        max_len: 8,
        mode,
        ..Default::default()
    }
}

fn train_config(epochs: usize) -> TrainConfig {
    TrainConfig { epochs, batch_size: 16, seed: 5, ..Default::default() }
}

#[derive(Default)]
struct Steps(Vec<StepRecord>, Vec<EpochRecord>);

impl Observer for Steps {
    fn on_step(&mut self, r: &StepRecord) {
        self.0.push(*r);
    }
    fn on_epoch(&mut self, r: &mut EpochRecord) {
        self.1.push(r.clone());
    }
}

#[test]
fn zero_epochs_returns_the_initialisation() {
    let (tr, dev) = corpus();
    let cfg = train_config(0);
    let t = train(&model_config(Mode::BiDc), &tr, &dev, &cfg, &mut ()).unwrap();
    assert!(t.log.is_empty() && t.best.is_none());
    assert_eq!(t.model.params(), Model::new(model_config(Mode::BiDc), cfg.seed).unwrap().params());
}

#[test]
fn training_is_deterministic() {
    let (tr, dev) = corpus();
    let a = train(&model_config(Mode::BiDc), &tr, &dev, &train_config(1), &mut ()).unwrap();
    let b = train(&model_config(Mode::BiDc), &tr, &dev, &train_config(1), &mut ()).unwrap();
    assert_eq!(a.model.params(), b.model.params());
    assert_eq!(a.log, b.log);
    let other = TrainConfig { seed: 6, ..train_config(1) };
    let c = train(&model_config(Mode::BiDc), &tr, &dev, &other, &mut ()).unwrap();
    assert_ne!(a.model.params(), c.model.params());
}

#[test]
fn resuming_matches_an_uninterrupted_run() {
    let (tr, dev) = corpus();
    let cfg = train_config(3);
    let full = train(&model_config(Mode::BiDc), &tr, &dev, &cfg, &mut ()).unwrap();

    let mut first = Trainer::new(Model::new(model_config(Mode::BiDc), cfg.seed).unwrap(), cfg.clone()).unwrap();
    first.run_epoch(&tr, &dev, &mut ()).unwrap();
    let (mc, params) = first.model.clone().into_parts();
    let mut resumed =
        Trainer::resume(Model::from_params(mc, params).unwrap(), cfg, first.optimizer.clone(), first.epochs_done).unwrap();
    resumed.run(&tr, &dev, &mut ()).unwrap();

    assert_eq!(resumed.epochs_done, 3);
    for (a, b) in full.model.params().values().iter().zip(resumed.model.params().values()) {
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }
    assert_eq!(full.log[1..], resumed.log[..]);
}

#[test]
fn logged_loss_mixes_the_task_losses() {
    let (tr, dev) = corpus();
    for lambda in [0.0, 0.3, 0.8, 1.0] {
        let mc = ModelConfig { lambda, ..model_config(Mode::BiDc) };
        let mut obs = Steps::default();
        train(&mc, &tr, &dev, &train_config(1), &mut obs).unwrap();
        assert_eq!(obs.0.len(), 6);
        for s in &obs.0 {
            let mixed = lambda * s.cor_loss + (1.0 - lambda) * s.det_loss.unwrap();
            assert!((s.loss - mixed).abs() <= 1e-12, "{s:?}");
        }
    }
}

#[test]
fn c_only_logs_the_correction_loss() {
    let (tr, dev) = corpus();
    let mc = ModelConfig { lambda: 0.3, ..model_config(Mode::COnly) };
    let mut obs = Steps::default();
    let t = train(&mc, &tr, &dev, &train_config(2), &mut obs).unwrap();
    assert!(obs.0.iter().all(|s| s.loss == s.cor_loss && s.det_loss.is_none()));
    assert!(t.log.iter().all(|e| e.loss == e.cor_loss && e.det_loss.is_none()));
    assert!(t.log.iter().all(|e| e.dev.unwrap().hard_detection_f1.is_none()));
}

#[test]
fn clipped_norm_respects_the_threshold() {
    let (tr, dev) = corpus();
    let cfg = TrainConfig { clip_norm: Some(0.05), ..train_config(1) };
    let mut obs = Steps::default();
    train(&model_config(Mode::BiDc), &tr, &dev, &cfg, &mut obs).unwrap();
    assert!(obs.0.iter().any(|s| s.grad_norm > 0.05));
    for s in &obs.0 {
        assert!(s.clipped_norm <= 0.05 + 1e-9);
        if s.grad_norm <= 0.05 {
            assert_eq!(s.clipped_norm, s.grad_norm);
        }
    }
}

#[test]
fn log_has_one_finite_record_per_epoch() {
    let (tr, dev) = corpus();
    let cfg = TrainConfig { eval_every: 2, ..train_config(5) };
    let t = train(&model_config(Mode::TwoHead), &tr, &dev, &cfg, &mut ()).unwrap();
    assert_eq!(t.log.iter().map(|e| e.epoch).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
    assert!(t.log.iter().all(|e| e.loss.is_finite() && e.cor_loss.is_finite()));
    // evaluated every second epoch and always after the last one
    let evaluated: Vec<usize> = t.log.iter().filter(|e| e.dev.is_some()).map(|e| e.epoch).collect();
    assert_eq!(evaluated, vec![2, 4, 5]);
    let best = t.best.unwrap();
    let top = t.log.iter().filter_map(|e| e.dev).map(|d| d.correction_f1).fold(0.0, f64::max);
    assert_eq!(best.correction_f1, top);
}

#[test]
fn loss_falls_on_a_learnable_toy() {
    let (tr, dev) = corpus();
    let t = train(&model_config(Mode::BiDc), &tr, &dev, &train_config(5), &mut ()).unwrap();
    assert!(t.log[4].loss < t.log[0].loss);
}

#[test]
fn nan_parameters_abort_as_divergence() {
    let (tr, dev) = corpus();
    let mut model = Model::new(model_config(Mode::BiDc), 0).unwrap();
    model.params_mut().get_mut("cor_head.w").unwrap().data_mut()[0] = f64::NAN;
    let mut t = Trainer::new(model, train_config(1)).unwrap();
    assert_eq!(t.run_epoch(&tr, &dev, &mut ()), Err(Error::Divergence { epoch: 1, step: 0 }));
}

#[test]
fn empty_training_set_is_rejected() {
    let (_, dev) = corpus();
    assert!(matches!(
        train(&model_config(Mode::BiDc), &[], &dev, &train_config(1), &mut ()),
        Err(Error::Config(_))
    ));
}

#[test]
fn epoch_batches_partition_the_set_and_pad_little() {
    let trainer = Trainer::new(Model::new(model_config(Mode::BiDc), 0).unwrap(), train_config(1)).unwrap();
    let bs = trainer.config.batch_size;
    let lengths: Vec<usize> = (0..5000).map(|i| 8 + (i * 7919) % 13).collect();
    let batches = trainer.epoch_batches(0, &lengths);
    let mut seen: Vec<usize> = batches.concat();
    seen.sort_unstable();
    assert_eq!(seen, (0..lengths.len()).collect::<Vec<_>>());
    assert!(batches.iter().all(|b| !b.is_empty() && b.len() <= bs));
    assert_eq!(batches, trainer.epoch_batches(0, &lengths));
    assert_ne!(batches, trainer.epoch_batches(1, &lengths));
    let padded: usize = batches.iter().map(|b| b.len() * b.iter().map(|&i| lengths[i]).max().unwrap()).sum();
    let real: usize = lengths.iter().sum();
    assert!((padded as f64) < 1.05 * real as f64, "{padded} padded positions for {real} tokens");
}
