use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bidc::checkpoint::load_checkpoint;
use bidc::config::ExperimentConfig;
use bidc::data::{write_dataset, Dataset};
use bidc::error::{CliError, Result};
use bidc::experiments::{self, SweepKind};
use bidc::report;
use bidc::runner::{model_for, train_run, BEST_FILE};
use bidc_core::corpus::{Vocab, UNK};
use bidc_core::evaluation::evaluate;
use bidc_core::model::{check_tiny, Batch, Mode, Model};
use clap::{Args, Parser, Subcommand};

/// Bi-directional detector-corrector spelling check experiments.
#[derive(Parser)]
#[command(name = "bidc", version)]
struct Cli {
    /// Experiment configuration (JSON). Defaults apply to absent fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the corpus and training seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for ablations and sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArg {
    /// Dataset directory with train/dev/test TSV files. Without it the
    /// configured synthetic corpus is generated in memory.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus and its manifest.
    GenData,
    /// Train one model.
    Train {
        #[command(flatten)]
        data: DataArg,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<Mode>,
        /// Weight of the correction loss.
        #[arg(long)]
        lambda: Option<f64>,
        /// Interaction layers.
        #[arg(long)]
        layers: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Score a checkpoint on one split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArg,
        #[arg(long, default_value = "test")]
        split: String,
        /// Print the report as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Train every mode for every seed and compare.
    Ablate {
        #[command(flatten)]
        data: DataArg,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long, value_delimiter = ',', value_parser = parse_mode,
              default_value = "bidc,d2c,c-only")]
        modes: Vec<Mode>,
    },
    /// Train over a grid of gate overrides, lambdas or layer counts.
    Sweep {
        kind: SweepKind,
        #[command(flatten)]
        data: DataArg,
        /// Grid values (default from the configuration).
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        /// Gates only: train once and apply each override at inference.
        #[arg(long)]
        inference_only: bool,
    },
    /// Compare analytic and finite-difference gradients on a tiny model.
    Gradcheck {
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Correct text lines (arguments, or stdin when none are given).
    Correct {
        #[arg(long)]
        checkpoint: PathBuf,
        text: Vec<String>,
    },
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    Mode::parse(s).ok_or_else(|| format!("unknown mode {s:?}; expected bidc, d2c, c-only or two-head"))
}

fn init_logging() -> Result<()> {
    let level = match std::env::var("BIDC_LOG").as_deref() {
        Err(_) | Ok("info") => log::LevelFilter::Info,
        Ok("quiet") => log::LevelFilter::Off,
        Ok("debug") => log::LevelFilter::Debug,
        Ok(other) => {
            return Err(CliError::Usage(format!(
                "BIDC_LOG={other:?}; expected quiet, info or debug"
            )))
        }
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    bidc::tune_allocator();
    match init_logging().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.corpus.seed = seed;
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn dataset(cfg: &ExperimentConfig, data: &DataArg) -> Result<Dataset> {
    match data.data.as_deref().or(cfg.data_dir.as_deref()) {
        Some(dir) => Dataset::load(dir),
        None => Dataset::synthetic(&cfg.corpus),
    }
}

fn out_dir(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn threads(cli: &Cli) -> usize {
    cli.threads
        .or_else(|| std::thread::available_parallelism().ok().map(|n| n.get()))
        .unwrap_or(1)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    match &cli.command {
        Command::GenData => {
            let dir = out_dir(&cli, "data");
            let manifest = write_dataset(&dir, &cfg.corpus)?;
            log::info!(
                "wrote {} / {} / {} sentences to {} (vocabulary {})",
                manifest.train,
                manifest.dev,
                manifest.test,
                dir.display(),
                &manifest.vocab_hash[..12]
            );
        }
        Command::Train {
            data,
            mode,
            lambda,
            layers,
            epochs,
            resume,
        } => {
            if let Some(m) = mode {
                cfg.model.mode = *m;
            }
            if let Some(l) = lambda {
                cfg.model.lambda = *l;
            }
            if let Some(n) = layers {
                cfg.model.layers = *n;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = *e;
            }
            let data = dataset(&cfg, data)?;
            let dir = out_dir(&cli, "run");
            let trainer = train_run(&cfg, &data, Some(&dir), *resume)?;
            match &trainer.best {
                Some(b) => println!(
                    "best dev correction F1 {:.4} at epoch {}; checkpoint {}",
                    b.correction_f1,
                    b.epoch,
                    dir.join(BEST_FILE).display()
                ),
                None => println!("trained {} epochs without dev evaluation", trainer.epochs_done),
            }
        }
        Command::Eval {
            checkpoint,
            data,
            split,
            json,
        } => {
            let data = dataset(&cfg, data)?;
            let samples = data.split(split)?;
            let model = model_for(load_checkpoint(checkpoint)?, &data)?;
            let sources: Vec<&[usize]> = samples.iter().map(|s| s.source()).collect();
            let preds = model.predict_all(&sources, cfg.eval.batch_size)?;
            let report = evaluate(&preds, samples)?;
            let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
            if let Some(dir) = &cli.out {
                std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
                let path = dir.join(format!("eval_{split}.json"));
                std::fs::write(&path, &text).map_err(CliError::io(&path))?;
            }
            if *json {
                print!("{text}");
            } else {
                print!("{}", report::eval_table(&report));
            }
        }
        Command::Ablate { data, seeds, modes } => {
            let seeds = seeds.clone().unwrap_or_else(|| cfg.sweep.seeds.clone());
            let data = dataset(&cfg, data)?;
            let ablation = experiments::ablate(&cfg, &data, &seeds, modes, threads(&cli))?;
            experiments::write_ablation(&out_dir(&cli, "ablation"), &ablation)?;
            print!("{}", report::ablation_table(&ablation));
        }
        Command::Sweep {
            kind,
            data,
            grid,
            inference_only,
        } => {
            if let Some(values) = grid {
                match kind {
                    SweepKind::Gates => cfg.sweep.gates = values.clone(),
                    SweepKind::Lambda => cfg.sweep.lambdas = values.clone(),
                    SweepKind::Layers => {
                        cfg.sweep.layers = values
                            .iter()
                            .map(|&v| {
                                if v >= 1.0 && v.fract() == 0.0 {
                                    Ok(v as usize)
                                } else {
                                    Err(CliError::Usage(format!("layer count {v} is not a positive integer")))
                                }
                            })
                            .collect::<Result<_>>()?
                    }
                }
            }
            let data = dataset(&cfg, data)?;
            let inference_only = *inference_only || cfg.sweep.inference_only;
            let cells = experiments::sweep(*kind, &cfg, &data, threads(&cli), inference_only)?;
            experiments::write_sweep(&out_dir(&cli, "sweep"), *kind, &cells)?;
            print!("{}", report::sweep_table(*kind, &cells));
        }
        Command::Gradcheck { seeds, eps, tol } => gradcheck(seeds, *eps, *tol)?,
        Command::Correct { checkpoint, text } => correct(checkpoint, text)?,
    }
    Ok(())
}

fn gradcheck(seeds: &[u64], eps: f64, tol: f64) -> Result<()> {
    let mut failed = Vec::new();
    for mode in Mode::ALL {
        for &seed in seeds {
            let r = check_tiny(mode, seed, eps, tol)?;
            print!("{}", report::gradcheck_lines(&format!("{mode} seed {seed}"), &r));
            if !r.passed() {
                failed.push(format!("{mode} seed {seed} ({:.3e})", r.max_rel_err()));
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::GradCheck(failed.join(", ")))
    }
}

fn correct(checkpoint: &Path, text: &[String]) -> Result<()> {
    let ckpt = load_checkpoint(checkpoint)?;
    let vocab = Vocab::from_stored(ckpt.vocab.clone())?;
    let model = Model::from_params(ckpt.config, ckpt.params)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut emit = |line: &str| -> Result<()> {
        let (lines, unknown) = correct_line(&model, &vocab, line)?;
        if unknown > 0 {
            log::warn!("{unknown} unknown character(s) left uncorrected in {line:?}");
        }
        for l in lines {
            writeln!(out, "{l}").map_err(CliError::io("<stdout>"))?;
        }
        Ok(())
    };
    if text.is_empty() {
        for line in io::stdin().lock().lines() {
            emit(&line.map_err(CliError::io("<stdin>"))?)?;
        }
    } else {
        for line in text {
            emit(line)?;
        }
    }
    Ok(())
}

/// The corrected line and a caret line under the flagged positions; empty
/// input gives no output. Unknown characters are echoed unchanged.
fn correct_line(model: &Model, vocab: &Vocab, line: &str) -> Result<(Vec<String>, usize)> {
    let chars: Vec<char> = line.chars().collect();
    if chars.is_empty() {
        return Ok((Vec::new(), 0));
    }
    let (ids, unknown) = vocab.encode_chars(line);
    let max_len = model.config().max_len;
    let mut corrected = String::new();
    let mut marks = String::new();
    for (chunk_ids, chunk_chars) in ids.chunks(max_len).zip(chars.chunks(max_len)) {
        let pred = model.predict(&Batch::from_sequences(&[chunk_ids]))?.remove(0);
        for (i, (&id, &c)) in chunk_ids.iter().zip(chunk_chars).enumerate() {
            let out = pred.corrected[i];
            let flagged = match &pred.det_labels {
                Some(labels) => labels[i] == 1,
                None => out != id,
            };
            if id == UNK || out == id {
                corrected.push(c);
            } else {
                corrected.push_str(vocab.token(out).unwrap_or("?"));
            }
            marks.push(if flagged && id != UNK { '^' } else { ' ' });
        }
    }
    Ok((vec![corrected, marks.trim_end().to_string()], unknown))
}
