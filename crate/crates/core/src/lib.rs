//! Structured legal question answering at desk scale.
//!
//! The crate wires together:
//!
//! - [`corpus`]: statute / case / QA records, JSONL ingestion, a seeded
//!   synthetic legal world, and embedding providers.
//! - [`knowledge_tree`]: the statute → case tree, two-step dense retrieval,
//!   flat and BM25 variants, and the binary index format.
//! - [`syllogism`]: strict major premise → minor premise → conclusion parsing.
//! - [`metrics`]: tokenization, ROUGE-1/2/L, BLEU, cosine.
//! - [`reward`]: the structure-gated reward and per-token KL shaping.
//! - [`policy`]: a small autoregressive MLP policy with hand-written
//!   backpropagation and supervised warm-up.
//! - [`ppo`]: clipped-surrogate PPO with a value baseline and GAE.

mod binio;
pub mod corpus;
pub mod knowledge_tree;
pub mod metrics;
pub mod numeric;
pub mod policy;
pub mod ppo;
pub mod reward;
pub mod rng;
pub mod syllogism;

pub use corpus::embed::{EmbeddingProvider, HashEmbedder, RemoteEmbedder};
pub use corpus::{Case, QaPair, Statute};
pub use knowledge_tree::{KnowledgeTree, RetrievedKnowledge};
pub use metrics::TokenMode;
pub use syllogism::{MarkerSet, ReasoningPath};
