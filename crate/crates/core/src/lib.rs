//! Topic modeling with side-data-conditioned Dirichlet priors.
//!
//! The model is latent Dirichlet allocation whose per-document prior
//! alpha_d is produced from the document's side data by a pluggable model:
//! a constant (plain LDA), a log-linear map (DMR), or a small neural
//! network. Training is stochastic variational EM: closed-form coordinate
//! updates for the per-document posteriors and the topic-word matrix, and
//! minibatch Adam ascent for the prior parameters.
//!
//! Module map:
//! * [`corpus`] — tokenization, vocabularies, side-data encoding, CSV/JSONL
//!   ingestion, and the synthetic review generator.
//! * [`numerics`] — digamma, log-gamma, log-sum-exp, and Dirichlet helpers.
//! * [`prior`] — the three prior models and their Adam training step.
//! * [`inference`] — the per-document variational E-step and the
//!   topic-word M-step.
//! * [`trainer`] — the EM driver, reporting, and checkpointing.
//! * [`eval`] — perplexity, grouping metrics, lift, feature export, and
//!   comment generation.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod inference;
pub mod numerics;
pub mod prior;
pub mod trainer;

pub use corpus::{Corpus, CorpusSchema, Document, SideSchema, SyntheticConfig, Vocabulary};
pub use error::{Error, Result};
pub use eval::{GroupingReport, PerplexityStats};
pub use inference::{TopicWordMatrix, VariationalDoc};
pub use numerics::{DirichletParam, ProbVector};
pub use prior::{AdamConfig, PriorModel};
pub use trainer::{PriorKind, TopicModel, TrainConfig, TrainReport};
