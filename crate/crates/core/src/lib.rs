//! Mining of low-entropy action segments from agent trajectory corpora,
//! latent action vocabularies, exact trajectory reparameterization, and
//! distillation data preparation.
//!
//! The pipeline runs corpus → [`miner::identify`] → [`vocab::build_vocabulary`]
//! → [`reparam::compress`] → [`distill::build_mask`], with
//! [`reparam::expand`] restoring any compressed trajectory exactly.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod distill;
pub mod error;
pub mod manifest;
pub mod metrics;
pub mod miner;
pub mod reparam;
pub mod vocab;

pub use config::{MinerConfig, PipelineConfig};
pub use corpus::{effective_horizon, load_corpus, tokenize_action, Corpus, Step, Token, TokenizerMode, Trajectory};
pub use distill::{build_mask, kl_distill_loss, AlignmentMask, LogitMatrix};
pub use error::{LarError, Result};
pub use metrics::{report, sweep, CorpusReport, SweepPoint};
pub use miner::{extract_candidates, identify, overlap, SegmentCandidate};
pub use reparam::{compress, expand, latent_horizon, reparameterization_rate, DualPair, SpanReplacement};
pub use vocab::{build_vocabulary, LatentAction, LatentVocabulary};
