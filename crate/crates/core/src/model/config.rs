use alloc::format;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which interaction framework the network realises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Detection and correction encoders joined by bi-directional
    /// interaction layers.
    #[serde(rename = "bidc")]
    BiDc,
    /// Detection-to-correction only: the bi-directional network with the
    /// detection-side gate pinned to 0.
    #[serde(rename = "d2c")]
    D2c,
    /// Correction encoder and correction head only.
    #[serde(rename = "c-only")]
    COnly,
    /// Correction encoder feeding both classifiers, no interaction.
    #[serde(rename = "two-head")]
    TwoHead,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::BiDc, Mode::D2c, Mode::COnly, Mode::TwoHead];

    pub fn name(self) -> &'static str {
        match self {
            Mode::BiDc => "bidc",
            Mode::D2c => "d2c",
            Mode::COnly => "c-only",
            Mode::TwoHead => "two-head",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        Mode::ALL.into_iter().find(|m| m.name() == s)
    }

    /// Whether the detection encoder and interaction layers exist.
    pub fn interacts(self) -> bool {
        matches!(self, Mode::BiDc | Mode::D2c)
    }

    pub fn has_detector(self) -> bool {
        self != Mode::COnly
    }
}

impl core::fmt::Display for Mode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_h: usize,
    pub d_ff: usize,
    pub n_heads: usize,
    pub det_depth: usize,
    pub cor_depth: usize,
    /// Number of stacked interaction layers.
    pub layers: usize,
    pub max_len: usize,
    /// Weight of the correction loss; detection gets `1 − lambda`.
    pub lambda: f64,
    pub mode: Mode,
    pub gate_override_alpha: Option<f64>,
    pub gate_override_beta: Option<f64>,
    pub ln_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 200,
            d_h: 64,
            d_ff: 128,
            n_heads: 1,
            det_depth: 2,
            cor_depth: 4,
            layers: 2,
            max_len: 32,
            lambda: 0.8,
            mode: Mode::BiDc,
            gate_override_alpha: None,
            gate_override_beta: None,
            ln_eps: 1e-5,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if self.vocab_size < 2 {
            return Err(Error::config("vocab_size must be at least 2"));
        }
        if self.d_h < 2 || self.d_ff == 0 {
            return Err(Error::config("d_h must be at least 2 and d_ff positive"));
        }
        if self.n_heads == 0 || !self.d_h.is_multiple_of(self.n_heads) {
            return Err(Error::config(format!(
                "d_h = {} is not divisible by n_heads = {}",
                self.d_h, self.n_heads
            )));
        }
        if self.max_len == 0 {
            return Err(Error::config("max_len must be positive"));
        }
        if !unit(self.lambda) {
            return Err(Error::config(format!("lambda = {} outside [0, 1]", self.lambda)));
        }
        if self.ln_eps.is_nan() || self.ln_eps <= 0.0 {
            return Err(Error::config("ln_eps must be positive"));
        }
        if self.cor_depth == 0 {
            return Err(Error::config("correction encoder depth must be at least 1"));
        }
        for (name, v) in [
            ("gate_override_alpha", self.gate_override_alpha),
            ("gate_override_beta", self.gate_override_beta),
        ] {
            if let Some(v) = v {
                if !unit(v) {
                    return Err(Error::config(format!("{name} = {v} outside [0, 1]")));
                }
            }
        }
        if self.mode.interacts() {
            if self.det_depth == 0 {
                return Err(Error::config("detection encoder depth must be at least 1"));
            }
            if self.layers == 0 {
                return Err(Error::config("at least one interaction layer is required"));
            }
        }
        if self.mode == Mode::D2c {
            if self.gate_override_alpha.is_some_and(|a| a != 0.0) {
                return Err(Error::config("d2c mode fixes the detection gate at 0"));
            }
            if self.gate_override_beta.is_some() {
                return Err(Error::config("d2c mode leaves the correction gate learned"));
            }
        }
        Ok(())
    }

    /// Detection-side gate override in force, including the one implied by
    /// D2C mode.
    pub fn alpha_override(&self) -> Option<f64> {
        match self.mode {
            Mode::D2c => Some(0.0),
            _ => self.gate_override_alpha,
        }
    }

    pub fn beta_override(&self) -> Option<f64> {
        self.gate_override_beta
    }

    /// Per-head key width.
    pub fn d_k(&self) -> usize {
        self.d_h / self.n_heads
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ModelConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            ModelConfig { n_heads: 3, ..Default::default() },
            ModelConfig { lambda: 1.5, ..Default::default() },
            ModelConfig { layers: 0, ..Default::default() },
            ModelConfig { det_depth: 0, ..Default::default() },
            ModelConfig { cor_depth: 0, mode: Mode::COnly, ..Default::default() },
            ModelConfig { gate_override_beta: Some(-0.1), ..Default::default() },
            ModelConfig { mode: Mode::D2c, gate_override_alpha: Some(0.5), ..Default::default() },
            ModelConfig { mode: Mode::D2c, gate_override_beta: Some(0.5), ..Default::default() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
        }
    }

    #[test]
    fn c_only_needs_no_detector_or_interaction() {
        let cfg = ModelConfig {
            mode: Mode::COnly,
            layers: 0,
            det_depth: 0,
            ..Default::default()
        };
        cfg.validate().unwrap();
    }

    #[test]
    fn d2c_implies_alpha_zero() {
        let cfg = ModelConfig { mode: Mode::D2c, ..Default::default() };
        assert_eq!(cfg.alpha_override(), Some(0.0));
        assert_eq!(cfg.beta_override(), None);
        let explicit = ModelConfig { mode: Mode::D2c, gate_override_alpha: Some(0.0), ..Default::default() };
        explicit.validate().unwrap();
    }

    #[test]
    fn mode_names_round_trip() {
        for m in Mode::ALL {
            assert_eq!(Mode::parse(m.name()), Some(m));
        }
        assert_eq!(Mode::parse("bogus"), None);
    }
}
