//! Plain-text tables for the terminal.

use std::fmt::Write;

use bidc_core::evaluation::{EvalReport, Prf};
use bidc_core::numeric::GradCheckReport;

use crate::experiments::{Ablation, SweepCell, SweepKind};

fn pct(x: f64) -> String {
    format!("{:6.2}", 100.0 * x)
}

fn opt_pct(x: Option<f64>) -> String {
    x.map(pct).unwrap_or_else(|| format!("{:>6}", "-"))
}

fn prf_row(out: &mut String, name: &str, p: &Prf) {
    let _ = writeln!(
        out,
        "{name:<22}{} {} {}   {:>6} {:>6} {:>6}",
        pct(p.precision),
        pct(p.recall),
        pct(p.f1),
        p.tp,
        p.fp,
        p.fn_
    );
}

pub fn eval_table(r: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} sentences, {} positions", r.sentences, r.positions);
    let _ = writeln!(out, "{:<22}{:>6} {:>6} {:>6}   {:>6} {:>6} {:>6}", "", "P", "R", "F1", "TP", "FP", "FN");
    prf_row(&mut out, "sentence detection", &r.sentence.detection);
    prf_row(&mut out, "sentence correction", &r.sentence.correction);
    if let Some(h) = &r.hard_detection {
        prf_row(&mut out, "hard detection", h);
    }
    prf_row(&mut out, "char detection", &r.character.detection);
    prf_row(&mut out, "char correction", &r.character.correction);
    if let Some(c) = &r.consistency {
        let _ = writeln!(
            out,
            "consistency: character {}  sentence {}",
            pct(c.character_level),
            pct(c.sentence_level)
        );
    }
    out
}

pub fn ablation_table(a: &Ablation) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<10}{:>6} {:>7} {:>7} {:>7} {:>7}", "mode", "seed", "det F1", "cor F1", "hard", "cons");
    for r in &a.runs {
        let _ = writeln!(
            out,
            "{:<10}{:>6}  {}  {}  {}  {}",
            r.mode.to_string(),
            r.seed,
            pct(r.test.detection_f1),
            pct(r.test.correction_f1),
            opt_pct(r.test.hard_detection_f1),
            opt_pct(r.test.char_consistency)
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<10}{:>7} {:>7} {:>8} {:>8}", "mean", "det F1", "cor F1", "Δdet", "Δcor");
    for s in &a.summary {
        let delta = |d: Option<f64>| d.map(|x| format!("{:+8.2}", 100.0 * x)).unwrap_or_else(|| format!("{:>8}", "-"));
        let _ = writeln!(
            out,
            "{:<10} {}  {} {} {}",
            s.mode.to_string(),
            pct(s.mean.detection_f1),
            pct(s.mean.correction_f1),
            delta(s.delta_detection_f1),
            delta(s.delta_correction_f1)
        );
    }
    out
}

pub fn sweep_table(kind: SweepKind, cells: &[SweepCell]) -> String {
    let mut out = String::new();
    let key = |c: &SweepCell| match kind {
        SweepKind::Gates => format!(
            "α={:<5} β={:<5}",
            c.alpha.map(|a| a.to_string()).unwrap_or_default(),
            c.beta.map(|b| b.to_string()).unwrap_or_default()
        ),
        SweepKind::Lambda => format!("λ={:<16}", c.lambda),
        SweepKind::Layers => format!("layers={:<11}", c.layers),
    };
    let _ = writeln!(out, "{:<18} {:>7} {:>7} {:>7} {:>7}", "cell", "det F1", "cor F1", "hard", "cons");
    for c in cells {
        let _ = writeln!(
            out,
            "{} {}  {}  {}  {}",
            key(c),
            pct(c.test.detection_f1),
            pct(c.test.correction_f1),
            opt_pct(c.test.hard_detection_f1),
            opt_pct(c.test.char_consistency)
        );
    }
    out
}

/// One summary line per check, then the worst parameters of failing ones.
pub fn gradcheck_lines(label: &str, r: &GradCheckReport) -> String {
    let mut out = String::new();
    let status = if r.passed() { "ok" } else { "FAILED" };
    let _ = writeln!(
        out,
        "{label}: {status}, max rel err {:.3e} over {} tensors ({} kink-skipped elements)",
        r.max_rel_err(),
        r.params.len(),
        r.kink_skipped()
    );
    if !r.passed() {
        for p in r.worst(5) {
            let _ = writeln!(
                out,
                "  {}: rel err {:.3e} at {} (analytic {:.6e}, numeric {:.6e})",
                p.name, p.max_rel_err, p.worst_index, p.analytic_at_worst, p.numeric_at_worst
            );
        }
    }
    out
}
