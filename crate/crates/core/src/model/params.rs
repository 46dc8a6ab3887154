//! Parameter inventory. Every tensor of the network is registered here in
//! a fixed order under a stable name; checkpoints and the optimizer address
//! parameters by position in that order.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::numeric::Array;
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Init {
    Embedding,
    Weight,
    Zero,
    One,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Linear {
    pub w: usize,
    pub b: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Norm {
    pub gain: usize,
    pub bias: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct EncoderLayer {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub ln1: Norm,
    pub ff1: Linear,
    pub ff2: Linear,
    pub ln2: Norm,
}

#[derive(Debug, Clone)]
pub(crate) struct InteractionLayer {
    pub det_q: Linear,
    pub det_k: Linear,
    pub det_v: Linear,
    pub cor_q: Linear,
    pub cor_k: Linear,
    pub cor_v: Linear,
    pub det_gate: Linear,
    pub cor_gate: Linear,
    pub fuse1: Linear,
    pub fuse2: Linear,
    pub ln_det: Norm,
    pub ln_cor: Norm,
    /// Shared by both streams after the fusion FFN.
    pub ln_out: Norm,
}

/// Index of every parameter role into the flat parameter list.
#[derive(Debug, Clone)]
pub(crate) struct Handles {
    pub token: usize,
    pub position: usize,
    pub det_encoder: Vec<EncoderLayer>,
    pub cor_encoder: Vec<EncoderLayer>,
    pub interaction: Vec<InteractionLayer>,
    pub det_head: Option<Linear>,
    pub cor_head: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub(crate) init: Init,
}

#[derive(Default)]
struct Builder {
    specs: Vec<ParamSpec>,
}

impl Builder {
    fn add(&mut self, name: String, shape: &[usize], init: Init) -> usize {
        self.specs.push(ParamSpec {
            name,
            shape: shape.to_vec(),
            init,
        });
        self.specs.len() - 1
    }

    fn linear(&mut self, prefix: &str, fan_in: usize, fan_out: usize) -> Linear {
        Linear {
            w: self.add(format!("{prefix}.w"), &[fan_in, fan_out], Init::Weight),
            b: Some(self.add(format!("{prefix}.b"), &[fan_out], Init::Zero)),
        }
    }

    /// Key projections carry no bias: a shared offset on every key shifts
    /// each score row by a constant, which the softmax cancels.
    fn key(&mut self, prefix: &str, d: usize) -> Linear {
        Linear {
            w: self.add(format!("{prefix}.w"), &[d, d], Init::Weight),
            b: None,
        }
    }

    fn norm(&mut self, prefix: &str, d: usize) -> Norm {
        Norm {
            gain: self.add(format!("{prefix}.gain"), &[d], Init::One),
            bias: self.add(format!("{prefix}.bias"), &[d], Init::Zero),
        }
    }

    fn encoder_layer(&mut self, prefix: &str, d: usize, ff: usize) -> EncoderLayer {
        EncoderLayer {
            q: self.linear(&format!("{prefix}.attn.q"), d, d),
            k: self.key(&format!("{prefix}.attn.k"), d),
            v: self.linear(&format!("{prefix}.attn.v"), d, d),
            o: self.linear(&format!("{prefix}.attn.o"), d, d),
            ln1: self.norm(&format!("{prefix}.ln1"), d),
            ff1: self.linear(&format!("{prefix}.ffn1"), d, ff),
            ff2: self.linear(&format!("{prefix}.ffn2"), ff, d),
            ln2: self.norm(&format!("{prefix}.ln2"), d),
        }
    }

    fn interaction_layer(&mut self, prefix: &str, d: usize, ff: usize) -> InteractionLayer {
        InteractionLayer {
            det_q: self.linear(&format!("{prefix}.det_attn.q"), d, d),
            det_k: self.key(&format!("{prefix}.det_attn.k"), d),
            det_v: self.linear(&format!("{prefix}.det_attn.v"), d, d),
            cor_q: self.linear(&format!("{prefix}.cor_attn.q"), d, d),
            cor_k: self.key(&format!("{prefix}.cor_attn.k"), d),
            cor_v: self.linear(&format!("{prefix}.cor_attn.v"), d, d),
            det_gate: self.linear(&format!("{prefix}.det_gate"), 2 * d, d),
            cor_gate: self.linear(&format!("{prefix}.cor_gate"), 2 * d, d),
            fuse1: self.linear(&format!("{prefix}.fuse1"), 2 * d, ff),
            fuse2: self.linear(&format!("{prefix}.fuse2"), ff, d),
            ln_det: self.norm(&format!("{prefix}.ln_det"), d),
            ln_cor: self.norm(&format!("{prefix}.ln_cor"), d),
            ln_out: self.norm(&format!("{prefix}.ln_out"), d),
        }
    }
}

/// Parameter specs in registration order plus the role handles.
pub(crate) fn layout(cfg: &ModelConfig) -> (Vec<ParamSpec>, Handles) {
    let (d, ff) = (cfg.d_h, cfg.d_ff);
    let mut b = Builder::default();
    let token = b.add("embed.token".into(), &[cfg.vocab_size, d], Init::Embedding);
    let position = b.add("embed.position".into(), &[cfg.max_len, d], Init::Embedding);
    let interacts = cfg.mode.interacts();
    let det_depth = if interacts { cfg.det_depth } else { 0 };
    let det_encoder = (0..det_depth)
        .map(|l| b.encoder_layer(&format!("det_encoder.{l}"), d, ff))
        .collect();
    let cor_encoder = (0..cfg.cor_depth)
        .map(|l| b.encoder_layer(&format!("cor_encoder.{l}"), d, ff))
        .collect();
    let n_inter = if interacts { cfg.layers } else { 0 };
    let interaction = (0..n_inter)
        .map(|l| b.interaction_layer(&format!("interaction.{l}"), d, ff))
        .collect();
    let det_head = cfg.mode.has_detector().then(|| b.linear("det_head", d, 2));
    let cor_head = b.linear("cor_head", d, cfg.vocab_size);
    (
        b.specs,
        Handles {
            token,
            position,
            det_encoder,
            cor_encoder,
            interaction,
            det_head,
            cor_head,
        },
    )
}

/// Closed-form element count of the parameter set for `cfg`.
pub fn param_census(cfg: &ModelConfig) -> usize {
    let (d, f, v) = (cfg.d_h, cfg.d_ff, cfg.vocab_size);
    let linear = |i: usize, o: usize| i * o + o;
    let key = d * d;
    let norm = 2 * d;
    let encoder_layer = 3 * linear(d, d) + key + 2 * norm + linear(d, f) + linear(f, d);
    let interaction_layer =
        4 * linear(d, d) + 2 * key + 2 * linear(2 * d, d) + linear(2 * d, f) + linear(f, d) + 3 * norm;
    let embed = v * d + cfg.max_len * d;
    let cor = cfg.cor_depth * encoder_layer + linear(d, v);
    let det_head = linear(d, 2);
    match cfg.mode {
        super::Mode::COnly => embed + cor,
        super::Mode::TwoHead => embed + cor + det_head,
        super::Mode::BiDc | super::Mode::D2c => {
            embed + cor + det_head + cfg.det_depth * encoder_layer + cfg.layers * interaction_layer
        }
    }
}

/// All trainable tensors of a network, in layout order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    names: Vec<String>,
    values: Vec<Array>,
}

impl ModelParams {
    /// Fresh initialisation: Xavier-uniform weights, zero biases, unit LN
    /// gains and `N(0, 1)` embeddings, drawn in layout order.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let (specs, _) = layout(cfg);
        let mut rng = rng::stream(seed, Purpose::Init, 0);
        let normal = Normal::new(0.0, 1.0).expect("valid normal");
        let mut names = Vec::with_capacity(specs.len());
        let mut values = Vec::with_capacity(specs.len());
        for spec in specs {
            let n: usize = spec.shape.iter().product();
            let data: Vec<f64> = match spec.init {
                Init::Embedding => (0..n).map(|_| normal.sample(&mut rng)).collect(),
                Init::Weight => {
                    let limit = libm::sqrt(6.0 / (spec.shape[0] + spec.shape[1]) as f64);
                    (0..n).map(|_| rng.random_range(-limit..limit)).collect()
                }
                Init::Zero => vec![0.0; n],
                Init::One => vec![1.0; n],
            };
            values.push(Array::from_parts(spec.shape, data));
            names.push(spec.name);
        }
        ModelParams { names, values }
    }

    /// Assembles parameters loaded from storage, checking them against the
    /// layout of `cfg`.
    pub fn from_named(cfg: &ModelConfig, named: Vec<(String, Array)>) -> Result<Self> {
        let (specs, _) = layout(cfg);
        if specs.len() != named.len() {
            return Err(Error::config(format!(
                "expected {} parameter tensors, found {}",
                specs.len(),
                named.len()
            )));
        }
        let mut names = Vec::with_capacity(named.len());
        let mut values = Vec::with_capacity(named.len());
        for (spec, (name, value)) in specs.iter().zip(named) {
            if spec.name != name || spec.shape != value.shape() {
                return Err(Error::config(format!(
                    "parameter {name} {:?} does not match expected {} {:?}",
                    value.shape(),
                    spec.name,
                    spec.shape
                )));
            }
            names.push(name);
            values.push(value);
        }
        Ok(ModelParams { names, values })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Array] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Array] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Array> {
        self.names.iter().position(|n| n == name).map(|i| &self.values[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array> {
        self.names.iter().position(|n| n == name).map(|i| &mut self.values[i])
    }

    pub fn element_count(&self) -> usize {
        self.values.iter().map(Array::numel).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }
}
