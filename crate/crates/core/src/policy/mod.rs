//! A small autoregressive token policy.
//!
//! The network looks at the last `W` tokens, concatenates their embeddings,
//! applies one tanh hidden layer and an affine head. All gradients are written
//! out by hand; [`grad_check`] compares them against central differences.
//!
//! The same [`Mlp`] with a scalar head doubles as the PPO value function.

mod checkpoint;
mod mlp;
mod optim;
mod sft;
pub mod vocab;
mod warmup;

use thiserror::Error;

use crate::knowledge_tree::TreeError;

pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use mlp::{Hyper, Mlp, PolicyParams};
pub use optim::Adam;
pub use sft::{
    decode, finite_difference_check, grad_check, greedy_decode, nll_loss, sample_token, sft_train,
    SftConfig, SftExample, DEFAULT_SFT_LR,
};
pub use vocab::Vocab;
pub use warmup::{
    build_warmup_dataset, prompt_tokens, warmup_examples, PathGenerator, TemplatePathGen,
    TEMPLATE_WORDS,
};

/// Upper bound on generated tokens per response.
pub const MAX_RESPONSE_LEN: usize = 128;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("token ordinal {ordinal} out of range for vocabulary of {size}")]
    OrdinalOutOfRange { ordinal: u32, size: usize },
    #[error("context has {got} tokens, window is {expected}")]
    BadContext { expected: usize, got: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid example: {0}")]
    InvalidExample(&'static str),
    #[error("path generator failed for item `{0}`")]
    PathGenFailure(String),
    #[error("retrieval failed: {0}")]
    Retrieval(#[from] TreeError),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error("invalid vocabulary file: {0}")]
    BadVocab(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint version {found}, expected {expected}")]
    VersionMismatch { found: u16, expected: u16 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
