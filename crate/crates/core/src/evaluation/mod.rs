//! Spelling-check metrics.
//!
//! Sentence-level scores follow the exact-position-set convention: a
//! sentence is a true positive only when it has gold errors and the model's
//! error positions (and, for correction, the replacement ids) match them
//! exactly. Every flagged sentence that is not a true positive is a false
//! positive; every erroneous sentence that is not a true positive is a false
//! negative. A zero denominator yields a score of 0 with a flag set.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::Sample;
use crate::error::{Error, Result};

/// Model output for one sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prediction {
    /// Detection classifier labels; absent for models without a detector.
    pub det_labels: Option<Vec<u8>>,
    pub corrected: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    /// Set when precision or recall had a zero denominator.
    pub zero_denominator: bool,
}

impl Prf {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
            zero_denominator: tp + fp == 0 || tp + fn_ == 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskScores {
    pub detection: Prf,
    pub correction: Prf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Consistency {
    pub character_level: f64,
    pub sentence_level: f64,
    pub zero_denominator: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub sentences: usize,
    pub positions: usize,
    pub sentence: TaskScores,
    pub character: TaskScores,
    /// Absent when the model has no detection classifier.
    pub hard_detection: Option<Prf>,
    pub consistency: Option<Consistency>,
}

fn check_len(source_len: usize, target_len: usize) -> Result<()> {
    if source_len != target_len {
        return Err(Error::Alignment {
            source_len,
            target_len,
        });
    }
    Ok(())
}

fn check_count(predicted: usize, gold: usize) -> Result<()> {
    check_len(predicted, gold)
}

#[derive(Default)]
struct Tally {
    tp: u64,
    fp: u64,
    fn_: u64,
}

impl Tally {
    fn sentence(&mut self, gold_has_errors: bool, flagged: bool, exact: bool) {
        let tp = gold_has_errors && exact;
        if tp {
            self.tp += 1;
        } else {
            self.fp += u64::from(flagged);
            self.fn_ += u64::from(gold_has_errors);
        }
    }

    fn prf(&self) -> Prf {
        Prf::from_counts(self.tp, self.fp, self.fn_)
    }
}

/// Sentence-level detection and correction, with detection read off the
/// corrector's output (positions where it changed the source).
pub fn sentence_metrics(predictions: &[Prediction], gold: &[Sample]) -> Result<TaskScores> {
    check_count(predictions.len(), gold.len())?;
    let (mut det, mut cor) = (Tally::default(), Tally::default());
    for (p, s) in predictions.iter().zip(gold) {
        check_len(p.corrected.len(), s.len())?;
        let flags = p.corrected.iter().zip(s.source()).map(|(c, x)| c != x);
        let positions_match = flags.clone().zip(s.labels()).all(|(f, &l)| f == (l == 1));
        let has_errors = s.error_count() > 0;
        let flagged = flags.clone().any(|f| f);
        det.sentence(has_errors, flagged, positions_match);
        cor.sentence(has_errors, flagged, positions_match && p.corrected == s.target());
    }
    Ok(TaskScores {
        detection: det.prf(),
        correction: cor.prf(),
    })
}

/// Sentence-level detection from the classifier's labels.
pub fn hard_detection_metrics<L: AsRef<[u8]>>(labels: &[L], gold: &[Sample]) -> Result<Prf> {
    check_count(labels.len(), gold.len())?;
    let mut det = Tally::default();
    for (l, s) in labels.iter().zip(gold) {
        let l = l.as_ref();
        check_len(l.len(), s.len())?;
        let flagged = l.contains(&1);
        det.sentence(s.error_count() > 0, flagged, l == s.labels());
    }
    Ok(det.prf())
}

/// Positionwise detection and correction from the corrector's output.
pub fn character_metrics(predictions: &[Prediction], gold: &[Sample]) -> Result<TaskScores> {
    check_count(predictions.len(), gold.len())?;
    let (mut det, mut cor) = (Tally::default(), Tally::default());
    for (p, s) in predictions.iter().zip(gold) {
        check_len(p.corrected.len(), s.len())?;
        for i in 0..s.len() {
            let predicted = p.corrected[i] != s.source()[i];
            let is_error = s.labels()[i] == 1;
            det.sentence(is_error, predicted, predicted);
            cor.sentence(is_error, predicted, predicted && p.corrected[i] == s.target()[i]);
        }
    }
    Ok(TaskScores {
        detection: det.prf(),
        correction: cor.prf(),
    })
}

/// Agreement between detection labels and the corrector's changes.
pub fn consistency_metrics<L, S, C>(labels: &[L], sources: &[S], corrected: &[C]) -> Result<Consistency>
where
    L: AsRef<[u8]>,
    S: AsRef<[usize]>,
    C: AsRef<[usize]>,
{
    check_count(labels.len(), sources.len())?;
    check_count(corrected.len(), sources.len())?;
    let (mut positions, mut consistent, mut whole) = (0usize, 0usize, 0usize);
    for ((l, s), c) in labels.iter().zip(sources).zip(corrected) {
        let (l, s, c) = (l.as_ref(), s.as_ref(), c.as_ref());
        check_len(s.len(), l.len())?;
        check_len(s.len(), c.len())?;
        let ok = (0..s.len()).filter(|&i| (l[i] == 1) == (c[i] != s[i])).count();
        positions += s.len();
        consistent += ok;
        whole += usize::from(ok == s.len());
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(Consistency {
        character_level: ratio(consistent, positions),
        sentence_level: ratio(whole, sources.len()),
        zero_denominator: positions == 0 || sources.is_empty(),
    })
}

/// Full report. Hard detection and consistency are filled in only when
/// every prediction carries detection labels.
pub fn evaluate(predictions: &[Prediction], gold: &[Sample]) -> Result<EvalReport> {
    let sentence = sentence_metrics(predictions, gold)?;
    let character = character_metrics(predictions, gold)?;
    let labels: Option<Vec<&[u8]>> = predictions
        .iter()
        .map(|p| p.det_labels.as_deref())
        .collect();
    let (hard_detection, consistency) = match labels {
        Some(labels) if !predictions.is_empty() => {
            let sources: Vec<&[usize]> = gold.iter().map(Sample::source).collect();
            let corrected: Vec<&[usize]> = predictions.iter().map(|p| p.corrected.as_slice()).collect();
            (
                Some(hard_detection_metrics(&labels, gold)?),
                Some(consistency_metrics(&labels, &sources, &corrected)?),
            )
        }
        _ => (None, None),
    };
    Ok(EvalReport {
        sentences: gold.len(),
        positions: gold.iter().map(Sample::len).sum(),
        sentence,
        character,
        hard_detection,
        consistency,
    })
}
