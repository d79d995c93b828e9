//! Sequence-to-sequence equation solver.
//!
//! The encoder stacks disentangled self-attention blocks (content and
//! relative-position projections kept apart); the decoder adds causal
//! disentangled self-attention, cross-attention over the encoder states, and
//! absolute positions entering its final block. Gradients come from a small
//! reverse-mode tape over `ndarray` matrices.

pub mod attention;
pub mod checkpoint;
pub mod config;
pub mod model;
pub mod params;
pub mod tape;
pub mod train;
pub mod vocab;

pub use config::{Schedule, SolverConfig, TrainConfig};
pub use model::{Prediction, SolverModel};
pub use params::ParameterStore;
pub use train::{fit, lr_schedule, optimizer_step, train_step, Example, TrainState};
pub use vocab::Vocab;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("token {0:?} is not in the vocabulary")]
    UnknownToken(String),
    #[error("token id {0} is outside the vocabulary")]
    TokenOutOfRange(usize),
    #[error("sequence of {len} tokens exceeds the maximum of {max}")]
    TooLong { len: usize, max: usize },
    #[error("empty token sequence")]
    EmptySequence,
    #[error("decoder prefix must start with <s>")]
    MissingStart,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("loss became non-finite ({loss}) at step {step}")]
    NonFiniteLoss { step: u64, loss: f64 },
    #[error("non-finite gradient in parameter {0}")]
    NonFiniteGradient(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
