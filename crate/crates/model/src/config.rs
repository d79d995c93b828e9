use serde::{Deserialize, Serialize};

use crate::vocab::SPECIALS;
use crate::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Embedding dimension.
    pub d: usize,
    /// Attention heads.
    pub h: usize,
    pub n_enc: usize,
    pub n_dec: usize,
    /// Feed-forward hidden width.
    pub d_ff: usize,
    /// Relative distances are clipped to `(-max_rel, max_rel)`.
    pub max_rel: usize,
    pub dropout: f64,
    /// Longest token sequence, input or output.
    pub max_len: usize,
    pub vocab: Vec<String>,
}

impl SolverConfig {
    /// Toy dimensions around a vocabulary; dropout 0.5, lower it for small data.
    pub fn with_vocab(vocab: Vec<String>) -> Self {
        SolverConfig {
            d: 64,
            h: 4,
            n_enc: 2,
            n_dec: 4,
            d_ff: 128,
            max_rel: 8,
            dropout: 0.5,
            max_len: 96,
            vocab,
        }
    }

    pub fn d_head(&self) -> usize {
        self.d / self.h
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.d == 0 || self.h == 0 || !self.d.is_multiple_of(self.h) {
            return bad(format!("d = {} must be a positive multiple of h = {}", self.d, self.h));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.max_rel == 0 {
            return bad("max_rel must be at least 1".into());
        }
        if self.n_dec == 0 || self.d_ff == 0 || self.max_len < 2 {
            return bad("n_dec, d_ff must be positive and max_len at least 2".into());
        }
        if self.vocab.len() < SPECIALS.len() || self.vocab[..SPECIALS.len()] != SPECIALS {
            return bad(format!("vocabulary must start with {SPECIALS:?}"));
        }
        Ok(())
    }
}

/// Learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    Fixed {
        lr: f64,
    },
    /// `factor · lr_schedule(n, epoch, d, warmup, gamma, step_size)`.
    Warmup {
        warmup: u64,
        gamma: f64,
        step_size: usize,
        factor: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: Schedule,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; none when absent.
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 8,
            schedule: Schedule::Fixed { lr: 1e-3 },
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(1.0),
            seed: 0,
        }
    }
}
