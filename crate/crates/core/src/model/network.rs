use alloc::vec::Vec;

use super::batch::{Batch, LabeledBatch};
use super::config::{Mode, ModelConfig};
use super::params::{layout, EncoderLayer, Handles, InteractionLayer, Linear, ModelParams, Norm};
use crate::error::{Error, Result};
use crate::evaluation::Prediction;
use crate::numeric::{grad_check, Array, AttentionLayout, GradCheckReport, Graph, NodeId, Probe};

/// Which task stream an operation belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Detection,
    Correction,
}

/// Parameters registered as leaves on a particular graph.
#[derive(Debug, Clone)]
pub struct Bound {
    nodes: Vec<NodeId>,
}

impl Bound {
    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    fn at(&self, i: usize) -> NodeId {
        self.nodes[i]
    }
}

/// Graph nodes produced by one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardNodes {
    pub det_logits: Option<NodeId>,
    pub cor_logits: NodeId,
    pub alphas: Vec<NodeId>,
    pub betas: Vec<NodeId>,
    pub det_state: Option<NodeId>,
    pub cor_state: NodeId,
}

/// Values of a forward pass, one row per batch position (pads included).
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub det_logits: Option<Array>,
    pub cor_logits: Array,
    /// Detection-side gate values per interaction layer, `[rows × d_h]`.
    pub alphas: Vec<Array>,
    /// Correction-side gate values per interaction layer.
    pub betas: Vec<Array>,
    pub det_state: Option<Array>,
    pub cor_state: Array,
}

#[derive(Debug, Clone, Copy)]
pub struct LossNodes {
    pub total: NodeId,
    pub det: Option<NodeId>,
    pub cor: NodeId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValues {
    pub total: f64,
    pub det: Option<f64>,
    pub cor: f64,
}

/// `λ·cor + (1 − λ)·det`.
pub fn mix_losses(cor: f64, det: f64, lambda: f64) -> f64 {
    lambda * cor + (1.0 - lambda) * det
}

/// The detector-corrector network.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: ModelParams,
    handles: Handles,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = ModelParams::init(&config, seed);
        Self::from_params(config, params)
    }

    pub fn from_params(config: ModelConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        let (specs, handles) = layout(&config);
        if specs.len() != params.len()
            || specs
                .iter()
                .zip(params.iter())
                .any(|(s, (name, v))| s.name != name || s.shape != v.shape())
        {
            return Err(Error::config("parameters do not match the model configuration"));
        }
        Ok(Model {
            config,
            params,
            handles,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    pub fn into_parts(self) -> (ModelConfig, ModelParams) {
        (self.config, self.params)
    }

    /// Replaces the gate overrides (inference-time interaction sweeps).
    pub fn set_gate_overrides(&mut self, alpha: Option<f64>, beta: Option<f64>) -> Result<()> {
        let mut cfg = self.config.clone();
        cfg.gate_override_alpha = alpha;
        cfg.gate_override_beta = beta;
        cfg.validate()?;
        self.config = cfg;
        Ok(())
    }

    /// Registers `values` (laid out like [`Model::params`]) as graph leaves.
    pub fn bind(&self, g: &mut Graph, values: &[Array]) -> Bound {
        Bound {
            nodes: values.iter().map(|v| g.param(v.clone())).collect(),
        }
    }

    /// `X = E[ids] + P[positions]`.
    pub fn embed(&self, g: &mut Graph, p: &Bound, batch: &Batch) -> Result<NodeId> {
        if batch.seq_len > self.config.max_len {
            return Err(Error::Length {
                len: batch.seq_len,
                max: self.config.max_len,
            });
        }
        let tok = g.embedding(p.at(self.handles.token), &batch.ids)?;
        let positions: Vec<usize> = batch.positions().collect();
        let pos = g.embedding(p.at(self.handles.position), &positions)?;
        g.add(tok, pos)
    }

    fn attention_layout(&self, batch: &Batch) -> AttentionLayout {
        AttentionLayout {
            batch: batch.batch,
            seq_len: batch.seq_len,
            heads: self.config.n_heads,
            key_mask: batch.mask.clone(),
        }
    }

    fn linear(g: &mut Graph, p: &Bound, x: NodeId, l: Linear) -> Result<NodeId> {
        match l.b {
            Some(b) => g.linear(x, p.at(l.w), p.at(b)),
            None => g.matmul(x, p.at(l.w)),
        }
    }

    fn norm(&self, g: &mut Graph, p: &Bound, x: NodeId, n: Norm) -> Result<NodeId> {
        g.layer_norm(x, p.at(n.gain), p.at(n.bias), self.config.ln_eps)
    }

    fn ffn(g: &mut Graph, p: &Bound, x: NodeId, l1: Linear, l2: Linear) -> Result<NodeId> {
        let h = Self::linear(g, p, x, l1)?;
        let h = g.relu(h);
        Self::linear(g, p, h, l2)
    }

    fn encoder_layer(&self, g: &mut Graph, p: &Bound, x: NodeId, l: &EncoderLayer, att: &AttentionLayout) -> Result<NodeId> {
        let q = Self::linear(g, p, x, l.q)?;
        let k = Self::linear(g, p, x, l.k)?;
        let v = Self::linear(g, p, x, l.v)?;
        let a = g.attention(q, k, v, att)?;
        let o = Self::linear(g, p, a, l.o)?;
        let h = g.add(x, o)?;
        let h = self.norm(g, p, h, l.ln1)?;
        let f = Self::ffn(g, p, h, l.ff1, l.ff2)?;
        let out = g.add(h, f)?;
        self.norm(g, p, out, l.ln2)
    }

    /// Task-specific transformer encoder stack over the embeddings.
    pub fn encode(&self, g: &mut Graph, p: &Bound, x: NodeId, batch: &Batch, side: Side) -> Result<NodeId> {
        let layers = match side {
            Side::Detection if !self.config.mode.interacts() => {
                return Err(Error::config("this mode has no detection encoder"))
            }
            Side::Detection => &self.handles.det_encoder,
            Side::Correction => &self.handles.cor_encoder,
        };
        if layers.is_empty() {
            return Err(Error::config("encoder depth must be at least 1"));
        }
        let att = self.attention_layout(batch);
        let mut h = x;
        for l in layers {
            h = self.encoder_layer(g, p, h, l, &att)?;
        }
        Ok(h)
    }

    fn interaction(&self, layer: usize) -> Result<&InteractionLayer> {
        self.handles
            .interaction
            .get(layer)
            .ok_or_else(|| Error::config("interaction layer index out of range"))
    }

    /// Cross-attention for one stream: queries from `query_state`, keys and
    /// values from `kv_state` (the other stream's previous output).
    #[allow(clippy::too_many_arguments)]
    pub fn cross_attend(
        &self,
        g: &mut Graph,
        p: &Bound,
        query_state: NodeId,
        kv_state: NodeId,
        batch: &Batch,
        side: Side,
        layer: usize,
    ) -> Result<NodeId> {
        let il = self.interaction(layer)?;
        let (wq, wk, wv) = match side {
            Side::Detection => (il.det_q, il.det_k, il.det_v),
            Side::Correction => (il.cor_q, il.cor_k, il.cor_v),
        };
        let q = Self::linear(g, p, query_state, wq)?;
        let k = Self::linear(g, p, kv_state, wk)?;
        let v = Self::linear(g, p, kv_state, wv)?;
        g.attention(q, k, v, &self.attention_layout(batch))
    }

    /// `g = σ(W[H̃ ⊕ H] + b)` (or the constant `override_value`), then
    /// `LN(g ⊙ H̃ + (1 − g) ⊙ H)`. Returns `(merged, gate)`.
    #[allow(clippy::too_many_arguments)]
    pub fn gated_merge(
        &self,
        g: &mut Graph,
        p: &Bound,
        h_tilde: NodeId,
        h_prev: NodeId,
        side: Side,
        layer: usize,
        override_value: Option<f64>,
    ) -> Result<(NodeId, NodeId)> {
        let il = self.interaction(layer)?;
        let (gate_lin, ln) = match side {
            Side::Detection => (il.det_gate, il.ln_det),
            Side::Correction => (il.cor_gate, il.ln_cor),
        };
        let gate = match override_value {
            Some(v) if !(0.0..=1.0).contains(&v) => {
                return Err(Error::config("gate override outside [0, 1]"));
            }
            Some(v) => {
                let shape = g.value(h_prev).shape().to_vec();
                g.constant(Array::full(&shape, v))
            }
            None => {
                let cat = g.concat_cols(h_tilde, h_prev)?;
                let z = Self::linear(g, p, cat, gate_lin)?;
                g.sigmoid(z)
            }
        };
        let mixed = g.lerp(gate, h_tilde, h_prev)?;
        Ok((self.norm(g, p, mixed, ln)?, gate))
    }

    /// Shared fusion FFN over the concatenated streams, added back to each
    /// stream through the shared output LN.
    pub fn fuse_ffn(&self, g: &mut Graph, p: &Bound, det: NodeId, cor: NodeId, layer: usize) -> Result<(NodeId, NodeId)> {
        let il = self.interaction(layer)?;
        let cat = g.concat_cols(det, cor)?;
        let merged = Self::ffn(g, p, cat, il.fuse1, il.fuse2)?;
        let d = g.add(det, merged)?;
        let c = g.add(cor, merged)?;
        Ok((self.norm(g, p, d, il.ln_out)?, self.norm(g, p, c, il.ln_out)?))
    }

    /// Full forward pass over parameter `values`.
    pub fn build(&self, g: &mut Graph, values: &[Array], batch: &Batch) -> Result<(Bound, ForwardNodes)> {
        let p = self.bind(g, values);
        let x = self.embed(g, &p, batch)?;
        let mut cor = self.encode(g, &p, x, batch, Side::Correction)?;
        let mut alphas = Vec::new();
        let mut betas = Vec::new();
        let mut det = None;
        match self.config.mode {
            Mode::BiDc | Mode::D2c => {
                let mut d = self.encode(g, &p, x, batch, Side::Detection)?;
                for i in 0..self.config.layers {
                    let dt = self.cross_attend(g, &p, d, cor, batch, Side::Detection, i)?;
                    let ct = self.cross_attend(g, &p, cor, d, batch, Side::Correction, i)?;
                    let (d1, a) = self.gated_merge(g, &p, dt, d, Side::Detection, i, self.config.alpha_override())?;
                    let (c1, b) = self.gated_merge(g, &p, ct, cor, Side::Correction, i, self.config.beta_override())?;
                    let (d2, c2) = self.fuse_ffn(g, &p, d1, c1, i)?;
                    alphas.push(a);
                    betas.push(b);
                    d = d2;
                    cor = c2;
                }
                det = Some(d);
            }
            Mode::TwoHead => det = Some(cor),
            Mode::COnly => {}
        }
        let det_logits = match (det, self.handles.det_head) {
            (Some(h), Some(head)) => Some(Self::linear(g, &p, h, head)?),
            _ => None,
        };
        let cor_logits = Self::linear(g, &p, cor, self.handles.cor_head)?;
        Ok((
            p,
            ForwardNodes {
                det_logits,
                cor_logits,
                alphas,
                betas,
                det_state: det,
                cor_state: cor,
            },
        ))
    }

    pub fn forward(&self, batch: &Batch) -> Result<ForwardTrace> {
        let mut g = Graph::new();
        let (_, n) = self.build(&mut g, self.params.values(), batch)?;
        let v = |id: NodeId| g.value(id).clone();
        Ok(ForwardTrace {
            det_logits: n.det_logits.map(v),
            cor_logits: v(n.cor_logits),
            alphas: n.alphas.iter().copied().map(v).collect(),
            betas: n.betas.iter().copied().map(v).collect(),
            det_state: n.det_state.map(v),
            cor_state: v(n.cor_state),
        })
    }

    /// Masked cross-entropies of both heads mixed with weight `lambda` on
    /// the correction loss. Without a detection head the total is the
    /// correction loss alone.
    pub fn loss_nodes(&self, g: &mut Graph, fwd: &ForwardNodes, batch: &LabeledBatch, lambda: f64) -> Result<LossNodes> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::config("lambda outside [0, 1]"));
        }
        let mask = &batch.inputs.mask;
        let cor = g.cross_entropy(fwd.cor_logits, &batch.cor_targets, mask)?;
        let Some(det_logits) = fwd.det_logits else {
            return Ok(LossNodes {
                total: cor,
                det: None,
                cor,
            });
        };
        let det = g.cross_entropy(det_logits, &batch.det_targets, mask)?;
        let wc = g.scale(cor, lambda);
        let wd = g.scale(det, 1.0 - lambda);
        let total = g.add(wc, wd)?;
        Ok(LossNodes {
            total,
            det: Some(det),
            cor,
        })
    }

    fn loss_values(g: &Graph, l: &LossNodes) -> LossValues {
        LossValues {
            total: g.value(l.total).data()[0],
            det: l.det.map(|d| g.value(d).data()[0]),
            cor: g.value(l.cor).data()[0],
        }
    }

    pub fn loss(&self, batch: &LabeledBatch, lambda: f64) -> Result<LossValues> {
        let mut g = Graph::new();
        let (_, fwd) = self.build(&mut g, self.params.values(), &batch.inputs)?;
        let l = self.loss_nodes(&mut g, &fwd, batch, lambda)?;
        Ok(Self::loss_values(&g, &l))
    }

    /// Loss and its gradient with respect to every parameter, in layout order.
    pub fn loss_and_grads(&self, batch: &LabeledBatch, lambda: f64) -> Result<(LossValues, Vec<Array>)> {
        let mut g = Graph::new();
        let (p, fwd) = self.build(&mut g, self.params.values(), &batch.inputs)?;
        let l = self.loss_nodes(&mut g, &fwd, batch, lambda)?;
        g.backward(l.total)?;
        let grads = p.nodes().iter().map(|&id| g.take_grad(id)).collect();
        Ok((Self::loss_values(&g, &l), grads))
    }

    /// Total loss at substituted parameter `values`, with the ReLU sign
    /// signature of the evaluation, for gradient checking.
    pub fn probe(&self, values: &[Array], batch: &LabeledBatch, lambda: f64) -> Result<Probe> {
        let mut g = Graph::new();
        let (_, fwd) = self.build(&mut g, values, &batch.inputs)?;
        let l = self.loss_nodes(&mut g, &fwd, batch, lambda)?;
        Ok(Probe {
            value: g.value(l.total).data()[0],
            kink: g.kink_signature(),
        })
    }

    /// Compares the analytic gradient of the mixed loss on `batch` with
    /// central differences for every parameter element.
    pub fn check_gradients(&self, batch: &LabeledBatch, lambda: f64, eps: f64, tol: f64) -> Result<GradCheckReport> {
        let (_, grads) = self.loss_and_grads(batch, lambda)?;
        let names: Vec<&str> = self.params.names().iter().map(|n| n.as_str()).collect();
        let mut values = self.params.values().to_vec();
        let mut failure = None;
        let report = grad_check(&names, &mut values, &grads, eps, tol, |vals| {
            self.probe(vals, batch, lambda).unwrap_or_else(|e| {
                failure.get_or_insert(e);
                Probe::smooth(f64::NAN)
            })
        });
        match failure {
            Some(e) => Err(e),
            None => Ok(report),
        }
    }

    /// Per-position argmax of both heads. Correction ties resolve to the
    /// input token, detection ties to label 0.
    pub fn predict(&self, batch: &Batch) -> Result<Vec<Prediction>> {
        let trace = self.forward(batch)?;
        Ok(decode(&trace, batch))
    }

    /// [`Model::predict`] over arbitrarily many sequences, `batch_size` at a time.
    pub fn predict_all<S: AsRef<[usize]>>(&self, seqs: &[S], batch_size: usize) -> Result<Vec<Prediction>> {
        let mut out = Vec::with_capacity(seqs.len());
        for chunk in seqs.chunks(batch_size.max(1)) {
            let batch = Batch::from_sequences(chunk);
            out.extend(self.predict(&batch)?);
        }
        Ok(out)
    }
}

/// Argmax decoding of a forward trace.
pub fn decode(trace: &ForwardTrace, batch: &Batch) -> Vec<Prediction> {
    let v = trace.cor_logits.shape()[1];
    (0..batch.batch)
        .map(|b| {
            let rows = b * batch.seq_len..b * batch.seq_len + batch.lengths[b];
            let corrected = rows
                .clone()
                .map(|r| {
                    let row = &trace.cor_logits.data()[r * v..(r + 1) * v];
                    let input = batch.ids[r];
                    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    if input < v && row[input] == max {
                        input
                    } else {
                        row.iter().position(|&x| x == max).unwrap_or(input)
                    }
                })
                .collect();
            let det_labels = trace.det_logits.as_ref().map(|dl| {
                rows.clone()
                    .map(|r| u8::from(dl.get2(r, 1) > dl.get2(r, 0)))
                    .collect()
            });
            Prediction {
                det_labels,
                corrected,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec as v;

    fn tiny(mode: Mode) -> ModelConfig {
        ModelConfig {
            vocab_size: 12,
            d_h: 4,
            d_ff: 6,
            n_heads: 1,
            det_depth: 1,
            cor_depth: 1,
            layers: 1,
            max_len: 8,
            mode,
            ..Default::default()
        }
    }

    #[test]
    fn logits_shapes() {
        let m = Model::new(tiny(Mode::BiDc), 1).unwrap();
        let batch = Batch::from_sequences(&[v![2, 3, 4], v![5, 6]]);
        let t = m.forward(&batch).unwrap();
        assert_eq!(t.det_logits.as_ref().unwrap().shape(), &[6, 2]);
        assert_eq!(t.cor_logits.shape(), &[6, 12]);
        assert_eq!(t.alphas.len(), 1);
        assert_eq!(t.alphas[0].shape(), &[6, 4]);
        assert!(t.alphas[0].data().iter().all(|&a| a > 0.0 && a < 1.0));

        let c = Model::new(tiny(Mode::COnly), 1).unwrap();
        let t = c.forward(&batch).unwrap();
        assert!(t.det_logits.is_none());
        assert!(t.alphas.is_empty());
    }

    #[test]
    fn too_long_input_is_rejected() {
        let m = Model::new(tiny(Mode::BiDc), 1).unwrap();
        let batch = Batch::from_sequences(&[v![2; 9]]);
        assert_eq!(m.forward(&batch), Err(Error::Length { len: 9, max: 8 }));
    }

    #[test]
    fn detection_encoder_absent_in_c_only() {
        let m = Model::new(tiny(Mode::COnly), 1).unwrap();
        let batch = Batch::from_sequences(&[v![2, 3]]);
        let mut g = Graph::new();
        let p = m.bind(&mut g, m.params().values());
        let x = m.embed(&mut g, &p, &batch).unwrap();
        assert!(matches!(m.encode(&mut g, &p, x, &batch, Side::Detection), Err(Error::Config(_))));
        let h = m.encode(&mut g, &p, x, &batch, Side::Correction).unwrap();
        assert_eq!(g.value(h).shape(), &[2, 4]);
    }

    #[test]
    fn gate_override_out_of_range() {
        let mut m = Model::new(tiny(Mode::BiDc), 1).unwrap();
        assert!(m.set_gate_overrides(Some(1.5), None).is_err());
        let batch = Batch::from_sequences(&[v![2, 3]]);
        let mut g = Graph::new();
        let p = m.bind(&mut g, m.params().values());
        let x = m.embed(&mut g, &p, &batch).unwrap();
        assert!(matches!(
            m.gated_merge(&mut g, &p, x, x, Side::Detection, 0, Some(-0.5)),
            Err(Error::Config(_))
        ));
    }
}
