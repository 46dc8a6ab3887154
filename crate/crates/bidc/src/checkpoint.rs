//! Binary checkpoints.
//!
//! ```text
//! BIDC1
//! config {model config as JSON}
//! vocab ["<pad>","<unk>",...]
//! epochs <completed epochs>
//! param <name> <d0>x<d1>...
//! ...
//! optimizer <step count>          (only when optimizer state is stored)
//! end
//! <f64 little-endian data: parameters in header order, then first and
//!  second moments in the same order when optimizer state is stored>
//! ```

use std::fs;
use std::path::Path;

use bidc_core::model::{ModelConfig, ModelParams};
use bidc_core::numeric::Array;
use bidc_core::training::AdamState;

use crate::error::{CliError, Result};

const MAGIC: &[u8] = b"BIDC1\n";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    /// Full token list including the reserved entries.
    pub vocab: Vec<String>,
    pub params: ModelParams,
    pub epochs_done: usize,
    pub optimizer: Option<AdamState>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut head = String::new();
        let config = serde_json::to_string(&self.config).expect("config serializes");
        let vocab = serde_json::to_string(&self.vocab).expect("vocab serializes");
        head.push_str(&format!("config {config}\nvocab {vocab}\nepochs {}\n", self.epochs_done));
        for (name, value) in self.params.iter() {
            let dims: Vec<String> = value.shape().iter().map(usize::to_string).collect();
            head.push_str(&format!("param {name} {}\n", dims.join("x")));
        }
        if let Some(opt) = &self.optimizer {
            head.push_str(&format!("optimizer {}\n", opt.t));
        }
        head.push_str("end\n");
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(head.as_bytes());
        let mut put = |a: &Array| {
            for x in a.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        };
        self.params.values().iter().for_each(&mut put);
        if let Some(opt) = &self.optimizer {
            opt.m.iter().chain(&opt.v).for_each(&mut put);
        }
        out
    }

    /// Parses a checkpoint; `path` only labels errors.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let format = |m: &str| CliError::Format {
            path: path.to_path_buf(),
            message: m.into(),
        };
        let corrupt = |m: String| CliError::Corrupt {
            path: path.to_path_buf(),
            message: m,
        };
        if !bytes.starts_with(MAGIC) {
            return Err(format("missing BIDC1 header"));
        }
        let mut pos = MAGIC.len();
        let mut next_line = || -> Result<&str> {
            let rest = &bytes[pos..];
            let end = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| corrupt("truncated header".into()))?;
            pos += end + 1;
            std::str::from_utf8(&rest[..end]).map_err(|_| corrupt("header is not UTF-8".into()))
        };
        let field = |line: &str, key: &str| -> Result<String> {
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| corrupt(format!("expected `{key}` line, found {line:?}")))
        };
        let config: ModelConfig = serde_json::from_str(&field(next_line()?, "config")?)
            .map_err(|e| corrupt(format!("config: {e}")))?;
        let vocab: Vec<String> =
            serde_json::from_str(&field(next_line()?, "vocab")?).map_err(|e| corrupt(format!("vocab: {e}")))?;
        let epochs_done = field(next_line()?, "epochs")?
            .parse()
            .map_err(|e| corrupt(format!("epochs: {e}")))?;
        let mut shapes = Vec::new();
        let mut opt_t = None;
        loop {
            let line = next_line()?;
            if line == "end" {
                break;
            }
            if let Some(t) = line.strip_prefix("optimizer ") {
                opt_t = Some(t.parse::<u64>().map_err(|e| corrupt(format!("optimizer: {e}")))?);
                continue;
            }
            let rest = field(line, "param")?;
            let (name, dims) = rest
                .rsplit_once(' ')
                .ok_or_else(|| corrupt(format!("malformed param line {line:?}")))?;
            let shape = dims
                .split('x')
                .map(str::parse)
                .collect::<std::result::Result<Vec<usize>, _>>()
                .map_err(|_| corrupt(format!("malformed shape {dims:?}")))?;
            shapes.push((name.to_string(), shape));
        }
        let numel: usize = shapes.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
        let copies = if opt_t.is_some() { 3 } else { 1 };
        let expected = numel * copies * 8;
        let data = &bytes[pos..];
        if data.len() != expected {
            return Err(corrupt(format!(
                "expected {expected} data bytes after the header, found {}",
                data.len()
            )));
        }
        let mut values = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut read = |shape: &[usize]| {
            let n = shape.iter().product();
            Array::new(shape.to_vec(), values.by_ref().take(n).collect()).expect("length matches shape")
        };
        let named: Vec<(String, Array)> = shapes.iter().map(|(n, s)| (n.clone(), read(s))).collect();
        let optimizer = opt_t.map(|t| {
            let m = shapes.iter().map(|(_, s)| read(s)).collect();
            let v = shapes.iter().map(|(_, s)| read(s)).collect();
            AdamState { m, v, t }
        });
        let params = ModelParams::from_named(&config, named).map_err(|e| corrupt(e.to_string()))?;
        Ok(Checkpoint {
            config,
            vocab,
            params,
            epochs_done,
            optimizer,
        })
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    fs::write(path, ckpt.to_bytes()).map_err(CliError::io(path))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    Checkpoint::from_bytes(&bytes, path)
}

