//! Ablations and sweeps: many independent training runs over one dataset,
//! spread over a worker pool. Results always come back in grid order.

use std::path::Path;

use bidc_core::evaluation::EvalReport;
use bidc_core::model::{Mode, Model};
use bidc_core::training::Trainer;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::data::Dataset;
use crate::error::{CliError, Result};
use crate::runner::{evaluate_best, train_run};

/// Test-set scores of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub detection_f1: f64,
    pub correction_f1: f64,
    pub hard_detection_f1: Option<f64>,
    pub char_consistency: Option<f64>,
    pub sentence_consistency: Option<f64>,
}

impl From<&EvalReport> for Scores {
    fn from(r: &EvalReport) -> Self {
        Scores {
            detection_f1: r.sentence.detection.f1,
            correction_f1: r.sentence.correction.f1,
            hard_detection_f1: r.hard_detection.map(|h| h.f1),
            char_consistency: r.consistency.map(|c| c.character_level),
            sentence_consistency: r.consistency.map(|c| c.sentence_level),
        }
    }
}

/// One training run: its settings, training curve and test scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub mode: Mode,
    pub seed: u64,
    pub lambda: f64,
    pub layers: usize,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub best_epoch: Option<usize>,
    pub dev_correction_f1: Vec<Option<f64>>,
    pub epoch_loss: Vec<f64>,
    pub test: Scores,
}

/// Trains `cfg` in memory and scores the best-dev parameters on the test split.
pub fn run_one(cfg: &ExperimentConfig, data: &Dataset) -> Result<RunResult> {
    let trainer = train_run(cfg, data, None, false)?;
    let report = evaluate_best(&trainer, &data.test)?;
    let m = trainer.model.config();
    Ok(RunResult {
        mode: m.mode,
        seed: cfg.train.seed,
        lambda: m.lambda,
        layers: m.layers,
        alpha: m.gate_override_alpha,
        beta: m.gate_override_beta,
        best_epoch: trainer.best.as_ref().map(|b| b.epoch),
        dev_correction_f1: trainer.log.iter().map(|e| e.dev.map(|d| d.correction_f1)).collect(),
        epoch_loss: trainer.log.iter().map(|e| e.loss).collect(),
        test: Scores::from(&report),
    })
}

/// Applies `f` to every job on `threads` workers, keeping job order.
pub fn par_map<T, R, F>(jobs: &[T], threads: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync,
{
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| jobs.par_iter().map(&f).collect())
}

/// A configuration for `mode`. Modes without interaction drop the
/// detection encoder and interaction layers.
pub fn with_mode(base: &ExperimentConfig, mode: Mode, seed: u64) -> ExperimentConfig {
    let mut cfg = base.clone();
    cfg.model.mode = mode;
    cfg.train.seed = seed;
    cfg.model.gate_override_alpha = None;
    cfg.model.gate_override_beta = None;
    cfg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: Mode,
    pub mean: Scores,
    /// Mean minus the C-only mean, when C-only was run.
    pub delta_detection_f1: Option<f64>,
    pub delta_correction_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ablation {
    pub runs: Vec<RunResult>,
    pub summary: Vec<ModeSummary>,
}

fn mean_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.collect();
    v.filter(|v| !v.is_empty()).map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

/// Mean scores over `runs`.
pub fn mean_scores(runs: &[&RunResult]) -> Scores {
    let n = runs.len().max(1) as f64;
    Scores {
        detection_f1: runs.iter().map(|r| r.test.detection_f1).sum::<f64>() / n,
        correction_f1: runs.iter().map(|r| r.test.correction_f1).sum::<f64>() / n,
        hard_detection_f1: mean_opt(runs.iter().map(|r| r.test.hard_detection_f1)),
        char_consistency: mean_opt(runs.iter().map(|r| r.test.char_consistency)),
        sentence_consistency: mean_opt(runs.iter().map(|r| r.test.sentence_consistency)),
    }
}

pub fn summarize(runs: Vec<RunResult>, modes: &[Mode]) -> Ablation {
    let means: Vec<(Mode, Scores)> = modes
        .iter()
        .map(|&m| {
            let rs: Vec<&RunResult> = runs.iter().filter(|r| r.mode == m).collect();
            (m, mean_scores(&rs))
        })
        .collect();
    let base = means.iter().find(|(m, _)| *m == Mode::COnly).map(|(_, s)| *s);
    let summary = means
        .into_iter()
        .map(|(mode, mean)| ModeSummary {
            mode,
            mean,
            delta_detection_f1: base.map(|b| mean.detection_f1 - b.detection_f1),
            delta_correction_f1: base.map(|b| mean.correction_f1 - b.correction_f1),
        })
        .collect();
    Ablation { runs, summary }
}

/// Trains every mode for every seed, seed-major.
pub fn ablate(base: &ExperimentConfig, data: &Dataset, seeds: &[u64], modes: &[Mode], threads: usize) -> Result<Ablation> {
    if seeds.is_empty() || modes.is_empty() {
        return Err(CliError::Usage("ablation needs at least one seed and one mode".into()));
    }
    let jobs: Vec<ExperimentConfig> = seeds
        .iter()
        .flat_map(|&s| modes.iter().map(move |&m| (m, s)))
        .map(|(m, s)| with_mode(base, m, s))
        .collect();
    let runs = par_map(&jobs, threads, |cfg| run_one(cfg, data))?;
    Ok(summarize(runs, modes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    Gates,
    Lambda,
    Layers,
}

/// One grid cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub lambda: f64,
    pub layers: usize,
    pub seed: u64,
    pub best_epoch: Option<usize>,
    pub test: Scores,
}

impl SweepCell {
    fn from_run(r: RunResult) -> Self {
        SweepCell {
            alpha: r.alpha,
            beta: r.beta,
            lambda: r.lambda,
            layers: r.layers,
            seed: r.seed,
            best_epoch: r.best_epoch,
            test: r.test,
        }
    }
}

/// Cell configurations of a sweep, in grid order (gates: α-major).
pub fn sweep_grid(kind: SweepKind, base: &ExperimentConfig) -> Result<Vec<ExperimentConfig>> {
    let mut base = base.clone();
    base.model.mode = Mode::BiDc;
    base.model.gate_override_alpha = None;
    base.model.gate_override_beta = None;
    let unit = |v: f64, what: &str| {
        if (0.0..=1.0).contains(&v) {
            Ok(())
        } else {
            Err(CliError::Config(format!("{what} grid value {v} outside [0, 1]")))
        }
    };
    let mut cells = Vec::new();
    match kind {
        SweepKind::Gates => {
            for &a in &base.sweep.gates {
                unit(a, "gate")?;
                for &b in &base.sweep.gates {
                    let mut c = base.clone();
                    c.model.gate_override_alpha = Some(a);
                    c.model.gate_override_beta = Some(b);
                    cells.push(c);
                }
            }
        }
        SweepKind::Lambda => {
            for &l in &base.sweep.lambdas {
                unit(l, "lambda")?;
                let mut c = base.clone();
                c.model.lambda = l;
                cells.push(c);
            }
        }
        SweepKind::Layers => {
            for &n in &base.sweep.layers {
                if n == 0 {
                    return Err(CliError::Config("layers grid values must be at least 1".into()));
                }
                let mut c = base.clone();
                c.model.layers = n;
                cells.push(c);
            }
        }
    }
    if cells.is_empty() {
        return Err(CliError::Config("empty sweep grid".into()));
    }
    Ok(cells)
}

/// Runs a sweep. With `inference_only` (gates only) one model is trained
/// with learned gates and each cell applies its overrides at test time.
pub fn sweep(kind: SweepKind, base: &ExperimentConfig, data: &Dataset, threads: usize, inference_only: bool) -> Result<Vec<SweepCell>> {
    let cells = sweep_grid(kind, base)?;
    if !inference_only {
        let runs = par_map(&cells, threads, |cfg| run_one(cfg, data))?;
        return Ok(runs.into_iter().map(SweepCell::from_run).collect());
    }
    if kind != SweepKind::Gates {
        return Err(CliError::Usage("--inference-only applies to the gates sweep".into()));
    }
    let mut learned = cells[0].clone();
    learned.model.gate_override_alpha = None;
    learned.model.gate_override_beta = None;
    let trainer = train_run(&learned, data, None, false)?;
    let params = match &trainer.best {
        Some(b) => b.params.clone(),
        None => trainer.model.params().clone(),
    };
    let best_epoch = trainer.best.as_ref().map(|b| b.epoch);
    par_map(&cells, threads, |cfg| {
        let model = Model::from_params(cfg.model.clone(), params.clone())?;
        let report = Trainer::new(model, cfg.train.clone())?.evaluate(&data.test)?;
        Ok(SweepCell {
            alpha: cfg.model.gate_override_alpha,
            beta: cfg.model.gate_override_beta,
            lambda: cfg.model.lambda,
            layers: cfg.model.layers,
            seed: cfg.train.seed,
            best_epoch,
            test: Scores::from(&report),
        })
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `rows` as CSV with a header line.
fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let fail = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.write_record(&r).map_err(fail)?;
    }
    w.flush().map_err(CliError::io(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("results serialize");
    std::fs::write(path, text + "\n").map_err(CliError::io(path))
}

const SCORE_COLUMNS: [&str; 5] = [
    "detection_f1",
    "correction_f1",
    "hard_detection_f1",
    "char_consistency",
    "sentence_consistency",
];

fn score_fields(s: &Scores) -> Vec<String> {
    vec![
        s.detection_f1.to_string(),
        s.correction_f1.to_string(),
        opt(s.hard_detection_f1),
        opt(s.char_consistency),
        opt(s.sentence_consistency),
    ]
}

/// `ablation.csv` (one row per run, then one `mean` row per mode) and
/// `ablation.json`.
pub fn write_ablation(dir: &Path, a: &Ablation) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let mut header = vec!["mode", "seed"];
    header.extend(SCORE_COLUMNS);
    header.extend(["delta_detection_f1", "delta_correction_f1"]);
    let mut rows: Vec<Vec<String>> = a
        .runs
        .iter()
        .map(|r| {
            let mut row = vec![r.mode.to_string(), r.seed.to_string()];
            row.extend(score_fields(&r.test));
            row.extend([String::new(), String::new()]);
            row
        })
        .collect();
    for s in &a.summary {
        let mut row = vec![s.mode.to_string(), "mean".into()];
        row.extend(score_fields(&s.mean));
        row.extend([opt(s.delta_detection_f1), opt(s.delta_correction_f1)]);
        rows.push(row);
    }
    write_csv(&dir.join("ablation.csv"), &header, rows)?;
    write_json(&dir.join("ablation.json"), a)
}

/// `sweep_<kind>.csv` (one row per cell) and `sweep_<kind>.json`.
pub fn write_sweep(dir: &Path, kind: SweepKind, cells: &[SweepCell]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let name = match kind {
        SweepKind::Gates => "gates",
        SweepKind::Lambda => "lambda",
        SweepKind::Layers => "layers",
    };
    let mut header = vec!["alpha", "beta", "lambda", "layers", "seed", "best_epoch"];
    header.extend(SCORE_COLUMNS);
    let rows = cells
        .iter()
        .map(|c| {
            let mut row = vec![
                opt(c.alpha),
                opt(c.beta),
                c.lambda.to_string(),
                c.layers.to_string(),
                c.seed.to_string(),
                c.best_epoch.map(|e| e.to_string()).unwrap_or_default(),
            ];
            row.extend(score_fields(&c.test));
            row
        })
        .collect();
    write_csv(&dir.join(format!("sweep_{name}.csv")), &header, rows)?;
    write_json(&dir.join(format!("sweep_{name}.json")), &cells)
}
