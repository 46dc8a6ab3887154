//! Parallel data as text: one sample per line, `source<TAB>target`, every
//! character one token.

use std::fs;
use std::path::Path;

use bidc_core::corpus::{Sample, Vocab, UNK};

use crate::error::{CliError, Result};

/// Written in place of ids without a printable token; reads back as unknown.
const UNKNOWN_CHAR: char = '\u{FFFD}';

#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub samples: Vec<Sample>,
    /// Characters missing from the vocabulary, mapped to the unknown id.
    pub unknown: usize,
}

/// Parses TSV text. `path` only labels errors.
pub fn parse_tsv(text: &str, vocab: &Vocab, path: &Path) -> Result<Parsed> {
    let mut samples = Vec::new();
    let mut unknown = 0;
    for (i, line) in text.lines().enumerate() {
        let parse_err = |message: String| CliError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let Some((src, tgt)) = line.split_once('\t') else {
            return Err(parse_err("expected source<TAB>target".into()));
        };
        if tgt.contains('\t') {
            return Err(parse_err("more than one TAB".into()));
        }
        let (s, us) = vocab.encode_chars(src);
        let (t, ut) = vocab.encode_chars(tgt);
        unknown += us + ut;
        let sample = Sample::new(s, t).map_err(|e| parse_err(e.to_string()))?;
        samples.push(sample);
    }
    if unknown > 0 {
        log::warn!("{}: {unknown} unknown characters mapped to <unk>", path.display());
    }
    Ok(Parsed { samples, unknown })
}

pub fn load_tsv(path: &Path, vocab: &Vocab) -> Result<Parsed> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    parse_tsv(&text, vocab, path)
}

fn render(ids: &[usize], vocab: &Vocab, out: &mut String) {
    for &id in ids {
        match vocab.token(id) {
            Some(t) if id != UNK && t.chars().count() == 1 => out.push_str(t),
            _ => out.push(UNKNOWN_CHAR),
        }
    }
}

pub fn format_tsv(samples: &[Sample], vocab: &Vocab) -> String {
    let mut out = String::new();
    for s in samples {
        render(s.source(), vocab, &mut out);
        out.push('\t');
        render(s.target(), vocab, &mut out);
        out.push('\n');
    }
    out
}

pub fn save_tsv(path: &Path, samples: &[Sample], vocab: &Vocab) -> Result<()> {
    fs::write(path, format_tsv(samples, vocab)).map_err(CliError::io(path))
}
