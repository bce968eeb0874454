use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    DecoderOnly,
    EncoderDecoder,
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::DecoderOnly => "decoder_only",
            Architecture::EncoderDecoder => "encoder_decoder",
        })
    }
}

impl FromStr for Architecture {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "decoder_only" => Ok(Architecture::DecoderOnly),
            "encoder_decoder" => Ok(Architecture::EncoderDecoder),
            _ => Err(ModelError::Config(format!("unknown architecture {s:?}"))),
        }
    }
}

/// Shape and initialization of one sequence model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub architecture: Architecture,
    /// Decoder blocks.
    pub layers: usize,
    /// Encoder blocks; ignored for decoder-only models.
    pub encoder_layers: usize,
    pub hidden_dim: usize,
    pub heads: usize,
    pub max_seq_len: usize,
    pub dropout: f64,
    pub seed: u64,
    /// Output head shares the input token-embedding table.
    pub tie_embeddings: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::decoder_default()
    }
}

impl ModelConfig {
    /// 4 layers, width 128, 4 heads.
    pub fn decoder_default() -> Self {
        ModelConfig {
            architecture: Architecture::DecoderOnly,
            layers: 4,
            encoder_layers: 0,
            hidden_dim: 128,
            heads: 4,
            max_seq_len: 64,
            dropout: 0.0,
            seed: 0,
            tie_embeddings: true,
        }
    }

    /// 2 encoder + 2 decoder layers, width 128.
    pub fn encoder_decoder_default() -> Self {
        ModelConfig {
            architecture: Architecture::EncoderDecoder,
            layers: 2,
            encoder_layers: 2,
            ..ModelConfig::decoder_default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.heads
    }

    pub fn is_encoder_decoder(&self) -> bool {
        self.architecture == Architecture::EncoderDecoder
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.layers == 0 {
            return err("layers must be positive");
        }
        if self.hidden_dim == 0 || self.heads == 0 {
            return err("hidden_dim and heads must be positive");
        }
        if self.hidden_dim % self.heads != 0 {
            return err("heads must divide hidden_dim");
        }
        if self.max_seq_len < 61 {
            return err("max_seq_len must be at least 61");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return err("dropout must lie in [0, 1)");
        }
        if self.is_encoder_decoder() && self.encoder_layers == 0 {
            return err("encoder_decoder needs encoder_layers >= 1");
        }
        Ok(())
    }

    /// `key=value` lines, the embedded form used in checkpoint files.
    pub fn to_kv(&self) -> String {
        format!(
            "architecture={}\nlayers={}\nencoder_layers={}\nhidden_dim={}\nheads={}\nmax_seq_len={}\ndropout={}\nseed={}\ntie_embeddings={}\n",
            self.architecture,
            self.layers,
            self.encoder_layers,
            self.hidden_dim,
            self.heads,
            self.max_seq_len,
            self.dropout,
            self.seed,
            self.tie_embeddings
        )
    }

    pub fn from_kv(text: &str) -> Result<Self, ModelError> {
        let mut cfg = ModelConfig::decoder_default();
        let bad = |k: &str, v: &str| ModelError::Config(format!("bad value {v:?} for {k}"));
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ModelError::Config(format!("malformed config line {line:?}")))?;
            match k {
                "architecture" => cfg.architecture = v.parse()?,
                "layers" => cfg.layers = v.parse().map_err(|_| bad(k, v))?,
                "encoder_layers" => cfg.encoder_layers = v.parse().map_err(|_| bad(k, v))?,
                "hidden_dim" => cfg.hidden_dim = v.parse().map_err(|_| bad(k, v))?,
                "heads" => cfg.heads = v.parse().map_err(|_| bad(k, v))?,
                "max_seq_len" => cfg.max_seq_len = v.parse().map_err(|_| bad(k, v))?,
                "dropout" => cfg.dropout = v.parse().map_err(|_| bad(k, v))?,
                "seed" => cfg.seed = v.parse().map_err(|_| bad(k, v))?,
                "tie_embeddings" => cfg.tie_embeddings = v.parse().map_err(|_| bad(k, v))?,
                _ => return Err(ModelError::Config(format!("unknown config key {k:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Optimizer and schedule settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub weight_decay: f64,
    pub gradient_clip_norm: f64,
    pub eval_interval: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            learning_rate: 1e-3,
            warmup_steps: 200,
            total_steps: 2000,
            weight_decay: 0.01,
            gradient_clip_norm: 1.0,
            eval_interval: 100,
            seed: 0,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.total_steps == 0 {
            return Err(ModelError::Config("total_steps must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(ModelError::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch_size must be positive".into()));
        }
        if self.eval_interval == 0 {
            return Err(ModelError::Config("eval_interval must be positive".into()));
        }
        Ok(())
    }

    /// Learning rate at a 0-based step: linear warmup, then constant.
    pub fn lr_at(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            self.learning_rate * (step + 1) as f64 / self.warmup_steps as f64
        } else {
            self.learning_rate
        }
    }
}
