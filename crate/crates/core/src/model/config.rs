use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attn::GateKind;
use crate::error::{Error, Result};

/// Token mixer used inside every IntegSSM block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SsmMode {
    /// Exact bidirectional state-space scan.
    Scan,
    /// Linear-cost gated attention.
    #[default]
    Attn,
}

impl fmt::Display for SsmMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SsmMode::Scan => "scan",
            SsmMode::Attn => "attn",
        })
    }
}

impl FromStr for SsmMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scan" => Ok(SsmMode::Scan),
            "attn" => Ok(SsmMode::Attn),
            _ => Err(Error::Config(format!("unknown ssm_mode `{s}` (expected scan or attn)"))),
        }
    }
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Token width `D`; the fused stream is `2D` wide.
    pub embed_dim: usize,
    /// Number of IntegSSM blocks in the visual encoder.
    pub depth: usize,
    pub in_channels: usize,
    pub input_h: usize,
    pub input_w: usize,
    /// Prompt length `M`.
    pub prompt_len: usize,
    pub vocab_size: usize,
    pub ssm_mode: SsmMode,
    pub use_rope: bool,
    pub gate: GateKind,
    /// Whether attention layers carry the depthwise residual.
    pub depthwise: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            depth: 4,
            in_channels: 3,
            input_h: 64,
            input_w: 64,
            prompt_len: 16,
            vocab_size: 4096,
            ssm_mode: SsmMode::Attn,
            use_rope: true,
            gate: GateKind::Channel,
            depthwise: true,
        }
    }
}

impl ModelConfig {
    /// Small configuration used for smoke training.
    pub fn tiny() -> Self {
        Self {
            embed_dim: 32,
            depth: 2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.embed_dim < 2 || self.embed_dim % 2 != 0 {
            return fail(format!("embed_dim must be even and positive, got {}", self.embed_dim));
        }
        if self.input_h == 0 || self.input_w == 0 || self.input_h % 4 != 0 || self.input_w % 4 != 0 {
            return fail(format!("input size {}x{} must be divisible by 4", self.input_h, self.input_w));
        }
        if !matches!(self.in_channels, 1 | 3) {
            return fail(format!("in_channels must be 1 or 3, got {}", self.in_channels));
        }
        if self.prompt_len == 0 || self.vocab_size == 0 {
            return fail("prompt_len and vocab_size must be positive".into());
        }
        Ok(())
    }

    /// Feature grid `(H_f, W_f)`.
    pub fn grid(&self) -> (usize, usize) {
        (self.input_h / 4, self.input_w / 4)
    }

    /// Visual token count `N`.
    pub fn tokens(&self) -> usize {
        let (h, w) = self.grid();
        h * w
    }
}
