//! Policy-gradient optimization of non-differentiable sequence-level rewards
//! for conditioned sequence generation.
//!
//! The crate provides a conditioned LSTM decoder with exact manual
//! backpropagation, the captioning metric suite (BLEU, ROUGE-L, CIDEr-D,
//! METEOR-lite, semantic-tuple F1), Monte-Carlo-rollout policy-gradient
//! training with a learned baseline, a MIXER-style annealed REINFORCE
//! trainer for comparison, and an exact enumeration oracle used to verify
//! every estimator on tiny instances.

pub mod error;
pub mod metrics;
pub mod oracle;
pub mod pg;
pub mod policy;
pub mod rewards;
pub mod runlog;
pub mod seqcore;

pub use error::{Error, Result};
