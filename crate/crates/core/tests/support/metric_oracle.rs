//! Brute-force recount of every report field, written with plain loops
//! and sets, plus a generator of small random datasets.

use std::collections::BTreeSet;

use bidc_core::corpus::Sample;
use bidc_core::evaluation::{EvalReport, Prediction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Counts {
    pub fn scores(&self) -> (f64, f64, f64, bool) {
        let p = if self.tp + self.fp == 0 { 0.0 } else { self.tp as f64 / (self.tp + self.fp) as f64 };
        let r = if self.tp + self.fn_ == 0 { 0.0 } else { self.tp as f64 / (self.tp + self.fn_) as f64 };
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        (p, r, f, self.tp + self.fp == 0 || self.tp + self.fn_ == 0)
    }
}

pub struct Recount {
    pub sent_det: Counts,
    pub sent_cor: Counts,
    pub char_det: Counts,
    pub char_cor: Counts,
    pub hard: Option<Counts>,
    /// (consistent positions, positions, fully consistent sentences, sentences)
    pub consistency: Option<(usize, usize, usize, usize)>,
}

pub fn recount(preds: &[Prediction], gold: &[Sample]) -> Recount {
    let zero = Counts { tp: 0, fp: 0, fn_: 0 };
    let (mut sd, mut sc, mut cd, mut cc, mut hd) = (zero, zero, zero, zero, zero);
    let mut all_labeled = !preds.is_empty();
    let (mut cons_pos, mut n_pos, mut cons_sent) = (0, 0, 0);
    for k in 0..gold.len() {
        let src = gold[k].source();
        let tgt = gold[k].target();
        let out = &preds[k].corrected;
        let mut wrong = BTreeSet::new();
        let mut changed = BTreeSet::new();
        let mut fixed_all = true;
        for i in 0..src.len() {
            if src[i] != tgt[i] {
                wrong.insert(i);
            }
            if out[i] != src[i] {
                changed.insert(i);
            }
            if out[i] != tgt[i] {
                fixed_all = false;
            }
            // character level
            if out[i] != src[i] && src[i] != tgt[i] {
                cd.tp += 1;
            } else {
                if out[i] != src[i] {
                    cd.fp += 1;
                }
                if src[i] != tgt[i] {
                    cd.fn_ += 1;
                }
            }
            if out[i] != src[i] && src[i] != tgt[i] && out[i] == tgt[i] {
                cc.tp += 1;
            } else {
                if out[i] != src[i] {
                    cc.fp += 1;
                }
                if src[i] != tgt[i] {
                    cc.fn_ += 1;
                }
            }
        }
        let erroneous = !wrong.is_empty();
        let flagged = !changed.is_empty();
        let det_hit = erroneous && changed == wrong;
        let cor_hit = det_hit && fixed_all;
        match (det_hit, flagged, erroneous) {
            (true, _, _) => sd.tp += 1,
            (false, f, e) => {
                sd.fp += f as u64;
                sd.fn_ += e as u64;
            }
        }
        if cor_hit {
            sc.tp += 1;
        } else {
            sc.fp += flagged as u64;
            sc.fn_ += erroneous as u64;
        }
        match &preds[k].det_labels {
            None => all_labeled = false,
            Some(labels) => {
                let marked: BTreeSet<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
                if erroneous && marked == wrong {
                    hd.tp += 1;
                } else {
                    hd.fp += !marked.is_empty() as u64;
                    hd.fn_ += erroneous as u64;
                }
                let mut every = true;
                for i in 0..src.len() {
                    if marked.contains(&i) == changed.contains(&i) {
                        cons_pos += 1;
                    } else {
                        every = false;
                    }
                }
                n_pos += src.len();
                cons_sent += every as usize;
            }
        }
    }
    Recount {
        sent_det: sd,
        sent_cor: sc,
        char_det: cd,
        char_cor: cc,
        hard: all_labeled.then_some(hd),
        consistency: all_labeled.then_some((cons_pos, n_pos, cons_sent, gold.len())),
    }
}

/// Asserts every field of `report` against the recount; returns the first
/// mismatch as a message.
pub fn compare(report: &EvalReport, preds: &[Prediction], gold: &[Sample]) -> Result<(), String> {
    let r = recount(preds, gold);
    let check = |name: &str, prf: &bidc_core::evaluation::Prf, c: &Counts| -> Result<(), String> {
        let (p, rc, f, z) = c.scores();
        let got = (prf.tp, prf.fp, prf.fn_, prf.precision, prf.recall, prf.f1, prf.zero_denominator);
        let want = (c.tp, c.fp, c.fn_, p, rc, f, z);
        if got == want {
            Ok(())
        } else {
            Err(format!("{name}: got {got:?}, expected {want:?}"))
        }
    };
    check("sentence detection", &report.sentence.detection, &r.sent_det)?;
    check("sentence correction", &report.sentence.correction, &r.sent_cor)?;
    check("character detection", &report.character.detection, &r.char_det)?;
    check("character correction", &report.character.correction, &r.char_cor)?;
    match (&report.hard_detection, &r.hard) {
        (Some(h), Some(c)) => check("hard detection", h, c)?,
        (None, None) => {}
        (a, b) => return Err(format!("hard detection presence: {a:?} vs {b:?}")),
    }
    match (&report.consistency, r.consistency) {
        (Some(c), Some((cp, np, cs, ns))) => {
            let want_c = if np == 0 { 0.0 } else { cp as f64 / np as f64 };
            let want_s = if ns == 0 { 0.0 } else { cs as f64 / ns as f64 };
            if (c.character_level, c.sentence_level, c.zero_denominator) != (want_c, want_s, np == 0 || ns == 0) {
                return Err(format!("consistency: got {c:?}, expected ({want_c}, {want_s})"));
            }
        }
        (None, None) => {}
        (a, b) => return Err(format!("consistency presence: {a:?} vs {b:?}")),
    }
    let positions: usize = gold.iter().map(|s| s.source().len()).sum();
    if report.sentences != gold.len() || report.positions != positions {
        return Err("sentence or position count".into());
    }
    Ok(())
}

/// Up to 10 sentences of length up to 6 over the 5 symbols `2..7`, with
/// predictions biased toward the interesting cases.
pub fn micro_dataset(seed: u64) -> (Vec<Prediction>, Vec<Sample>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labeled = rng.random_bool(0.8);
    let n = rng.random_range(0..=10);
    let mut preds = Vec::new();
    let mut gold = Vec::new();
    for _ in 0..n {
        let len = rng.random_range(0..=6);
        let target: Vec<usize> = (0..len).map(|_| rng.random_range(2..7)).collect();
        let source: Vec<usize> =
            target.iter().map(|&t| if rng.random_bool(0.3) { rng.random_range(2..7) } else { t }).collect();
        let corrected: Vec<usize> = (0..len)
            .map(|i| match rng.random_range(0..4) {
                0 => target[i],
                1 => source[i],
                2 => rng.random_range(2..7),
                _ => if rng.random_bool(0.5) { target[i] } else { source[i] },
            })
            .collect();
        let det_labels = labeled.then(|| {
            (0..len)
                .map(|i| match rng.random_range(0..3) {
                    0 => u8::from(source[i] != target[i]),
                    1 => u8::from(corrected[i] != source[i]),
                    _ => rng.random_range(0..2),
                })
                .collect()
        });
        preds.push(Prediction { det_labels, corrected });
        gold.push(Sample::new(source, target).unwrap());
    }
    (preds, gold)
}
